//! Parameter storage and the small set of layers the networks are built from.

use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, TensorError};
use crate::srp::{Mode, SrpRng};
use crate::tensor::{BnStats, Graph, Scalar, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BufferId(usize);

/// Named trainable tensors, in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn register(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.values
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }
}

/// Named running batch-norm statistics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BufferStore<T> {
    names: Vec<String>,
    stats: Vec<BnStats<T>>,
}

impl<T: Scalar> BufferStore<T> {
    pub fn new() -> Self {
        BufferStore {
            names: Vec::new(),
            stats: Vec::new(),
        }
    }

    pub fn register(&mut self, name: impl Into<String>, channels: usize) -> BufferId {
        self.names.push(name.into());
        self.stats.push(BnStats::new(channels));
        BufferId(self.stats.len() - 1)
    }

    pub fn get(&self, id: BufferId) -> &BnStats<T> {
        &self.stats[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BnStats<T>)> {
        self.names.iter().map(String::as_str).zip(&self.stats)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut BnStats<T>)> {
        self.names.iter().map(String::as_str).zip(self.stats.iter_mut())
    }
}

/// One forward pass: the graph, bound parameters, batch-norm buffers and
/// the pooling randomness for this step. Named intermediate values are
/// recorded as taps for the analysis tools.
pub struct Ctx<'a, T: Scalar> {
    pub g: Graph<T>,
    params: Vec<Var>,
    buffers: &'a mut BufferStore<T>,
    pub mode: Mode,
    pub rng: SrpRng,
    taps: Vec<(String, Var)>,
}

impl<'a, T: Scalar> Ctx<'a, T> {
    /// Binds every parameter as a graph leaf. `track_grads` controls whether
    /// those leaves take part in backward.
    pub fn new(
        params: &ParamStore<T>,
        buffers: &'a mut BufferStore<T>,
        mode: Mode,
        rng: SrpRng,
        track_grads: bool,
    ) -> Result<Self> {
        let mut g = Graph::new();
        let params = params
            .values()
            .iter()
            .map(|t| g.leaf(t.clone(), track_grads))
            .collect::<Result<Vec<_>, TensorError>>()?;
        Ok(Ctx {
            g,
            params,
            buffers,
            mode,
            rng,
            taps: Vec::new(),
        })
    }

    /// Wraps an existing graph whose leaves `params` already hold the
    /// parameters, in store order.
    pub fn bind(
        g: Graph<T>,
        params: Vec<Var>,
        buffers: &'a mut BufferStore<T>,
        mode: Mode,
        rng: SrpRng,
    ) -> Self {
        Ctx {
            g,
            params,
            buffers,
            mode,
            rng,
            taps: Vec::new(),
        }
    }

    pub fn p(&self, id: ParamId) -> Var {
        self.params[id.0]
    }

    pub fn batchnorm(&mut self, x: Var, bn: &BatchNorm) -> Result<Var> {
        let (gamma, beta) = (self.p(bn.gamma), self.p(bn.beta));
        let stats = &mut self.buffers.stats[bn.stats.0];
        Ok(self
            .g
            .batchnorm2d(x, gamma, beta, stats, self.mode == Mode::Train)?)
    }

    pub fn tap(&mut self, name: impl Into<String>, v: Var) {
        self.taps.push((name.into(), v));
    }

    pub fn tapped(&self, name: &str) -> Option<Var> {
        self.taps.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub fn tap_names(&self) -> impl Iterator<Item = &str> {
        self.taps.iter().map(|(n, _)| n.as_str())
    }

    /// Gradients of every parameter after backward, zeros where none flowed.
    pub fn param_grads(&self, store: &ParamStore<T>) -> Vec<Tensor<T>> {
        self.params
            .iter()
            .zip(store.values())
            .map(|(&v, t)| {
                self.g
                    .grad(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(t.shape()))
            })
            .collect()
    }
}

/// He-normal initialization for a conv kernel `[F, C, kh, kw]`.
pub fn he_normal<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<T> {
    let fan_in: usize = shape[1..].iter().product();
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    let data = (0..shape.iter().product::<usize>())
        .map(|_| T::lit(normal.sample(rng)))
        .collect();
    Tensor::from_vec(shape, data).expect("shape matches data")
}

/// Uniform in `±1/sqrt(fan_in)`.
pub fn fan_in_uniform<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let data = (0..shape.iter().product::<usize>())
        .map(|_| T::lit(rng.random_range(-bound..bound)))
        .collect();
    Tensor::from_vec(shape, data).expect("shape matches data")
}

/// Bias-free convolution.
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let weight = store.register(
            format!("{name}.weight"),
            he_normal(rng, &[out_ch, in_ch, kernel, kernel]),
        );
        Conv {
            weight,
            stride,
            pad,
        }
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let k = ctx.p(self.weight);
        Ok(ctx.g.conv2d(x, k, self.stride, self.pad)?)
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub stats: BufferId,
}

impl BatchNorm {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        buffers: &mut BufferStore<T>,
        name: &str,
        channels: usize,
    ) -> Self {
        BatchNorm {
            gamma: store.register(format!("{name}.gamma"), Tensor::full(&[channels], T::one())),
            beta: store.register(format!("{name}.beta"), Tensor::zeros(&[channels])),
            stats: buffers.register(name, channels),
        }
    }
}

/// Affine map `x W + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        inputs: usize,
        outputs: usize,
    ) -> Self {
        Linear {
            weight: store.register(
                format!("{name}.weight"),
                fan_in_uniform(rng, &[inputs, outputs], inputs),
            ),
            bias: store.register(format!("{name}.bias"), Tensor::zeros(&[outputs])),
        }
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let (w, b) = (ctx.p(self.weight), ctx.p(self.bias));
        Ok(ctx.g.affine(x, w, b)?)
    }
}
