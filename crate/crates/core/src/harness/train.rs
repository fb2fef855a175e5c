//! Training loop and evaluation.

use std::fmt::Write as _;
use std::time::Instant;

use rand::RngExt;

use crate::error::{Error, Result, TensorError};
use crate::nn::{BufferStore, Ctx, ParamStore};
use crate::srp::rng::{stream, Domain};
use crate::srp::{Mode, SrpConfig, SrpRng};
use crate::tensor::{SgdNesterov, Tensor};

use super::augment::{augment, mixup};
use super::config::{NetworkConfig, RunConfig, Timing};
use super::data::{Cifar, Dataset, Normalization, CHANNELS, IMAGE_SIDE, PIXELS};
use super::model::ResNet;

/// A network together with its parameters, running statistics and the input
/// normalization it was trained with.
#[derive(Clone, Debug)]
pub struct Model {
    pub net: ResNet,
    pub params: ParamStore<f32>,
    pub buffers: BufferStore<f32>,
    pub norm: Normalization,
}

impl Model {
    pub fn init(cfg: &NetworkConfig, seed: u64) -> Result<Self> {
        let (net, params, buffers) = ResNet::init(cfg, seed)?;
        Ok(Model {
            net,
            params,
            buffers,
            norm: Normalization {
                mean: [0.0; CHANNELS],
                std: [1.0; CHANNELS],
            },
        })
    }

    /// Same weights with a different pooling configuration. Parameters do not
    /// depend on it, so this only changes training-mode forward passes.
    pub fn with_srp(&self, srp: SrpConfig) -> Self {
        let mut m = self.clone();
        m.net.cfg.srp = srp;
        m
    }

    /// Eval-mode logits `[N, classes]`. Running statistics are left untouched.
    pub fn predict_logits(&self, x: Tensor<f32>) -> Result<Tensor<f32>> {
        let mut buffers = self.buffers.clone();
        let mut ctx = Ctx::new(&self.params, &mut buffers, Mode::Eval, SrpRng::new(0, 0), false)?;
        let xv = ctx.g.input(x)?;
        let logits = self.net.forward(&mut ctx, xv)?;
        Ok(ctx.g.value(logits).clone())
    }

    /// Predicted class of every image, processed in chunks of `batch`.
    pub fn predict(&self, data: &Dataset, batch: usize) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(data.len());
        let indices: Vec<usize> = (0..data.len()).collect();
        for chunk in indices.chunks(batch.max(1)) {
            let (x, _) = data.batch(chunk);
            let logits = self.predict_logits(x)?;
            out.extend(argmax_rows(&logits));
        }
        Ok(out)
    }
}

pub fn argmax_rows(logits: &Tensor<f32>) -> Vec<usize> {
    let k = logits.shape()[1];
    logits
        .data()
        .chunks_exact(k)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len() as f64
}

/// `m[true][predicted]` counts.
pub fn confusion_matrix(predicted: &[usize], labels: &[usize], classes: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; classes]; classes];
    for (&p, &l) in predicted.iter().zip(labels) {
        m[l][p] += 1;
    }
    m
}

/// Eval-mode top-1 accuracy on `data`.
pub fn evaluate(model: &Model, data: &Dataset) -> Result<f64> {
    let predicted = model.predict(data, 250)?;
    let labels: Vec<usize> = data.labels.iter().map(|&l| l as usize).collect();
    Ok(accuracy(&predicted, &labels))
}

/// Optimizer state and step counter around a model.
pub struct Trainer {
    pub model: Model,
    pub seed: u64,
    /// Number of optimizer steps taken; also keys the pooling masks.
    pub step: u64,
    opt: SgdNesterov<f32>,
}

impl Trainer {
    pub fn new(model: Model, seed: u64, momentum: f64, weight_decay: f64) -> Self {
        Trainer {
            model,
            seed,
            step: 0,
            opt: SgdNesterov::new(momentum as f32, weight_decay as f32),
        }
    }

    /// One SGD step on `x` with the loss `lam·CE(a) + (1-lam)·CE(b)`.
    /// Returns the pre-update loss.
    pub fn step_mixed(
        &mut self,
        x: Tensor<f32>,
        labels_a: &[usize],
        labels_b: &[usize],
        lam: f32,
        lr: f64,
    ) -> Result<f32> {
        let step = self.step;
        let diverged = |e: TensorError| match e {
            TensorError::NonFinite { op } => Error::Divergence {
                step,
                detail: format!("{op} produced a non-finite value"),
            },
            other => Error::Tensor(other),
        };
        let m = &mut self.model;
        let mut ctx = Ctx::new(
            &m.params,
            &mut m.buffers,
            Mode::Train,
            SrpRng::new(self.seed, step),
            true,
        )?;
        let xv = ctx.g.input(x)?;
        let logits = m.net.forward(&mut ctx, xv).map_err(|e| match e {
            Error::Tensor(t) => diverged(t),
            other => other,
        })?;
        let loss = ctx
            .g
            .softmax_xent_mixed(logits, labels_a, labels_b, lam)
            .map_err(diverged)?;
        let value = ctx.g.value(loss).data()[0];
        ctx.g.backward(loss).map_err(diverged)?;
        let grads = ctx.param_grads(&m.params);
        drop(ctx);
        self.opt
            .step(m.params.values_mut(), grads, lr as f32)
            .map_err(diverged)?;
        if m.params.values().iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence {
                step,
                detail: "parameters became non-finite".into(),
            });
        }
        self.step += 1;
        Ok(value)
    }

    pub fn step(&mut self, x: Tensor<f32>, labels: &[usize], lr: f64) -> Result<f32> {
        self.step_mixed(x, labels, labels, 1.0, lr)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_acc: f64,
    pub seconds: f64,
}

pub const METRICS_HEADER: &str = "epoch,train_loss,test_acc,seconds";

impl EpochMetrics {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.3}",
            self.epoch, self.train_loss, self.test_acc, self.seconds
        )
    }
}

pub fn metrics_csv(rows: &[EpochMetrics]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for r in rows {
        let _ = writeln!(s, "{}", r.csv_line());
    }
    s
}

pub struct TrainOutcome {
    pub model: Model,
    pub metrics: Vec<EpochMetrics>,
    pub steps: u64,
}

/// Training images for one step: augmented copies of `indices`, each drawn
/// from its own `(step, position)` stream.
fn augmented_batch(run: &RunConfig, data: &Dataset, indices: &[usize], step: u64) -> Vec<f32> {
    let mut out = Vec::with_capacity(indices.len() * PIXELS);
    for (pos, &i) in indices.iter().enumerate() {
        let mut rng = stream(run.train.seed, step, Domain::Augment, pos as u64);
        out.extend(augment(
            data.image(i),
            CHANNELS,
            IMAGE_SIDE,
            &mut rng,
            &run.train.augment,
        ));
    }
    out
}

/// Epoch order: a Fisher-Yates shuffle keyed by `(seed, epoch)`.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = stream(seed, epoch as u64, Domain::Shuffle, 0);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    order
}

/// Trains from a fresh initialization, evaluating on the test split after
/// every epoch. `on_epoch` sees each metrics row as soon as it exists.
pub fn train(
    run: &RunConfig,
    data: &Cifar,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    run.validate()?;
    let t = &run.train;
    if data.train.is_empty() {
        return Err(Error::config("training split is empty"));
    }
    let mut model = Model::init(&run.net, t.seed)?;
    model.norm = data.norm.clone();
    let mut trainer = Trainer::new(model, t.seed, t.momentum, t.weight_decay);
    let mut metrics = Vec::with_capacity(t.epochs);
    for epoch in 0..t.epochs {
        let start = Instant::now();
        let lr = t.lr_at(epoch);
        let order = epoch_order(t.seed, epoch, data.train.len());
        let (mut loss_sum, mut seen) = (0.0f64, 0usize);
        for chunk in order.chunks(t.batch_size) {
            let step = trainer.step;
            let images = augmented_batch(run, &data.train, chunk, step);
            let labels: Vec<usize> = chunk.iter().map(|&i| data.train.labels[i] as usize).collect();
            let shape = [chunk.len(), CHANNELS, IMAGE_SIDE, IMAGE_SIDE];
            let loss = if t.augment.mixup {
                let mut rng = stream(t.seed, step, Domain::Mixup, 0);
                let mixed = mixup(&mut rng, &images, PIXELS, t.augment.mixup_alpha)?;
                let labels_b: Vec<usize> = mixed.perm.iter().map(|&j| labels[j]).collect();
                let x = Tensor::from_vec(&shape, mixed.data)?;
                trainer.step_mixed(x, &labels, &labels_b, mixed.lambda as f32, lr)?
            } else {
                trainer.step(Tensor::from_vec(&shape, images)?, &labels, lr)?
            };
            loss_sum += loss as f64 * chunk.len() as f64;
            seen += chunk.len();
        }
        let test_acc = evaluate(&trainer.model, &data.test)?;
        let row = EpochMetrics {
            epoch,
            train_loss: loss_sum / seen as f64,
            test_acc,
            seconds: match t.timing {
                Timing::Wall => start.elapsed().as_secs_f64(),
                Timing::Off => 0.0,
            },
        };
        on_epoch(&row);
        metrics.push(row);
    }
    Ok(TrainOutcome {
        steps: trainer.step,
        model: trainer.model,
        metrics,
    })
}
