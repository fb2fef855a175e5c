use super::conv::{conv2d_backward, conv2d_forward, ConvGeom};
use super::{gemm, MatRef, Scalar, Tensor};
use crate::error::TensorError;

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Running batch-norm statistics for one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BnStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> BnStats<T> {
    pub const MOMENTUM: f64 = 0.1;
    pub const EPS: f64 = 1e-5;

    pub fn new(channels: usize) -> Self {
        BnStats {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
        }
    }
}

enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        k: Var,
        geom: ConvGeom,
    },
    Affine {
        x: Var,
        w: Var,
        b: Var,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    Relu(Var),
    Sigmoid(Var),
    Add(Var, Var),
    MulChannel {
        u: Var,
        alpha: Var,
    },
    MaskedMean {
        x: Var,
        // per sample: member cells (row-major) and 1/|mask|
        cells: Vec<Vec<usize>>,
        scale: Vec<T>,
    },
    Fold(Var, Var),
    Reshape(Var),
    SoftmaxXent {
        logits: Var,
        probs: Vec<T>,
        targets: Vec<(usize, usize, T)>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Tape of executed ops. Backward replays the tape in exact reverse order and
/// accumulates gradients additively.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn check_finite<T: Scalar>(op: &'static str, data: &[T]) -> Result<(), TensorError> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(
        &mut self,
        op_name: &'static str,
        value: Tensor<T>,
        op: Op<T>,
        requires_grad: bool,
    ) -> Result<Var, TensorError> {
        check_finite(op_name, value.data())?;
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Gradient accumulated by the last backward pass, if `v` received any.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Result<Var, TensorError> {
        self.push("leaf", value, Op::Leaf, requires_grad)
    }

    /// Constant input, no gradient tracked.
    pub fn input(&mut self, value: Tensor<T>) -> Result<Var, TensorError> {
        self.leaf(value, false)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Result<Var, TensorError> {
        self.leaf(value, true)
    }

    pub fn conv2d(
        &mut self,
        x: Var,
        k: Var,
        stride: usize,
        pad: usize,
    ) -> Result<Var, TensorError> {
        let geom = ConvGeom::new(self.value(x), self.value(k), stride, pad)?;
        let out = conv2d_forward(&geom, self.value(x).data(), self.value(k).data());
        let value = Tensor::from_vec(&[geom.n, geom.f, geom.ho, geom.wo], out)?;
        let rg = self.rg(x) || self.rg(k);
        self.push("conv2d", value, Op::Conv2d { x, k, geom }, rg)
    }

    /// `x W + b` with `x: [N, D]`, `W: [D, E]`, `b: [E]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var, TensorError> {
        let (n, d) = self.value(x).dims2("affine")?;
        let (wd, e) = self.value(w).dims2("affine")?;
        if wd != d || self.value(b).shape() != [e] {
            return Err(TensorError::shape(
                "affine",
                format!(
                    "x {:?}, W {:?}, b {:?}",
                    self.value(x).shape(),
                    self.value(w).shape(),
                    self.value(b).shape()
                ),
            ));
        }
        let bias = self.value(b).data();
        let mut out: Vec<T> = (0..n).flat_map(|_| bias.iter().copied()).collect();
        gemm(
            n,
            d,
            e,
            MatRef::row_major(self.value(x).data(), d),
            MatRef::row_major(self.value(w).data(), e),
            T::one(),
            &mut out,
        );
        let value = Tensor::from_vec(&[n, e], out)?;
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        self.push("affine", value, Op::Affine { x, w, b }, rg)
    }

    /// Per-channel batch normalization. With `train` set, normalizes by batch
    /// statistics and folds them into `stats`; otherwise uses `stats`.
    pub fn batchnorm2d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: &mut BnStats<T>,
        train: bool,
    ) -> Result<Var, TensorError> {
        let (n, c, h, w) = self.value(x).dims4("batchnorm2d")?;
        if self.value(gamma).shape() != [c]
            || self.value(beta).shape() != [c]
            || stats.mean.len() != c
            || stats.var.len() != c
        {
            return Err(TensorError::shape(
                "batchnorm2d",
                format!("per-channel parameters must have length {c}"),
            ));
        }
        let plane = h * w;
        let count = n * plane;
        let eps = BnStats::<T>::EPS;
        let momentum = T::lit(BnStats::<T>::MOMENTUM);
        let xs = self.value(x).data();
        let mut mean = vec![T::zero(); c];
        let mut inv_std = vec![T::zero(); c];
        for ch in 0..c {
            let (m, v) = if train {
                let mut s = 0.0f64;
                for s_i in 0..n {
                    let off = (s_i * c + ch) * plane;
                    s += xs[off..off + plane].iter().map(|v| v.as_f64()).sum::<f64>();
                }
                let m = s / count as f64;
                let mut sq = 0.0f64;
                for s_i in 0..n {
                    let off = (s_i * c + ch) * plane;
                    sq += xs[off..off + plane]
                        .iter()
                        .map(|v| {
                            let d = v.as_f64() - m;
                            d * d
                        })
                        .sum::<f64>();
                }
                let var = sq / count as f64;
                let unbiased = if count > 1 {
                    sq / (count - 1) as f64
                } else {
                    var
                };
                stats.mean[ch] = (T::one() - momentum) * stats.mean[ch] + momentum * T::lit(m);
                stats.var[ch] =
                    (T::one() - momentum) * stats.var[ch] + momentum * T::lit(unbiased);
                (m, var)
            } else {
                (stats.mean[ch].as_f64(), stats.var[ch].as_f64())
            };
            mean[ch] = T::lit(m);
            inv_std[ch] = T::lit(1.0 / (v + eps).sqrt());
        }
        let g = self.value(gamma).data();
        let bta = self.value(beta).data();
        let mut xhat = vec![T::zero(); xs.len()];
        let mut out = vec![T::zero(); xs.len()];
        for s_i in 0..n {
            for ch in 0..c {
                let off = (s_i * c + ch) * plane;
                for i in off..off + plane {
                    let xh = (xs[i] - mean[ch]) * inv_std[ch];
                    xhat[i] = xh;
                    out[i] = g[ch] * xh + bta[ch];
                }
            }
        }
        let value = Tensor::from_vec(&[n, c, h, w], out)?;
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        self.push(
            "batchnorm2d",
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats: train,
            },
            rg,
        )
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, TensorError> {
        let value = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        let rg = self.rg(x);
        self.push("relu", value, Op::Relu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, TensorError> {
        let value = self.value(x).map(|v| {
            if v >= T::zero() {
                T::one() / (T::one() + (-v).exp())
            } else {
                let e = v.exp();
                e / (T::one() + e)
            }
        });
        let rg = self.rg(x);
        self.push("sigmoid", value, Op::Sigmoid(x), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(TensorError::shape(
                "add",
                format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&p, &q)| p + q).collect();
        let value = Tensor::from_vec(ta.shape(), data)?;
        let rg = self.rg(a) || self.rg(b);
        self.push("add", value, Op::Add(a, b), rg)
    }

    /// Recalibration: `out[n,c,i,j] = alpha[n,c] * u[n,c,i,j]`.
    pub fn mul_channelwise(&mut self, u: Var, alpha: Var) -> Result<Var, TensorError> {
        let (n, c, h, w) = self.value(u).dims4("mul_channelwise")?;
        if self.value(alpha).shape() != [n, c] {
            return Err(TensorError::shape(
                "mul_channelwise",
                format!(
                    "gate {:?} does not match feature map {:?}",
                    self.value(alpha).shape(),
                    self.value(u).shape()
                ),
            ));
        }
        let plane = h * w;
        let us = self.value(u).data();
        let al = self.value(alpha).data();
        let mut out = vec![T::zero(); us.len()];
        for (nc, &a) in al.iter().enumerate() {
            let off = nc * plane;
            for i in off..off + plane {
                out[i] = a * us[i];
            }
        }
        let value = Tensor::from_vec(&[n, c, h, w], out)?;
        let rg = self.rg(u) || self.rg(alpha);
        self.push("mul_channelwise", value, Op::MulChannel { u, alpha }, rg)
    }

    /// Global average pooling `[N,C,H,W] -> [N,C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var, TensorError> {
        let (n, _, h, w) = self.value(x).dims4("global_avg_pool")?;
        let all: Vec<usize> = (0..h * w).collect();
        self.masked_mean_cells("global_avg_pool", x, vec![all; n])
    }

    /// Mean over the member cells of a per-sample spatial mask, shared by all
    /// channels of that sample. `masks[s]` is a row-major `H*W` membership
    /// grid; every mask needs at least one member.
    pub fn masked_mean(&mut self, x: Var, masks: &[&[bool]]) -> Result<Var, TensorError> {
        let (n, _, h, w) = self.value(x).dims4("masked_mean")?;
        if masks.len() != n || masks.iter().any(|m| m.len() != h * w) {
            return Err(TensorError::shape(
                "masked_mean",
                format!("need {n} masks of {h}x{w} cells"),
            ));
        }
        let cells: Vec<Vec<usize>> = masks
            .iter()
            .map(|m| (0..h * w).filter(|&i| m[i]).collect())
            .collect();
        if cells.iter().any(|c| c.is_empty()) {
            return Err(TensorError::shape("masked_mean", "empty region mask"));
        }
        self.masked_mean_cells("masked_mean", x, cells)
    }

    fn masked_mean_cells(
        &mut self,
        op_name: &'static str,
        x: Var,
        cells: Vec<Vec<usize>>,
    ) -> Result<Var, TensorError> {
        let (n, c, h, w) = self.value(x).dims4(op_name)?;
        let plane = h * w;
        let xs = self.value(x).data();
        let mut out = vec![T::zero(); n * c];
        for s in 0..n {
            let count = T::lit(cells[s].len() as f64);
            for ch in 0..c {
                let map = &xs[(s * c + ch) * plane..(s * c + ch + 1) * plane];
                let mut acc = T::zero();
                for &i in &cells[s] {
                    acc = acc + map[i];
                }
                out[s * c + ch] = acc / count;
            }
        }
        let scale = cells
            .iter()
            .map(|m| T::one() / T::lit(m.len() as f64))
            .collect();
        let value = Tensor::from_vec(&[n, c], out)?;
        let rg = self.rg(x);
        self.push(op_name, value, Op::MaskedMean { x, cells, scale }, rg)
    }

    /// Folds two `[N,C]` descriptors into a one-channel `[N,1,2,C]` grid:
    /// row 0 from `top`, row 1 from `bottom`.
    pub fn fold_rows(&mut self, top: Var, bottom: Var) -> Result<Var, TensorError> {
        let (n, c) = self.value(top).dims2("fold_rows")?;
        if self.value(bottom).shape() != [n, c] {
            return Err(TensorError::shape(
                "fold_rows",
                format!(
                    "{:?} vs {:?}",
                    self.value(top).shape(),
                    self.value(bottom).shape()
                ),
            ));
        }
        let mut out = Vec::with_capacity(2 * n * c);
        for s in 0..n {
            out.extend_from_slice(self.value(top).row(s));
            out.extend_from_slice(self.value(bottom).row(s));
        }
        let value = Tensor::from_vec(&[n, 1, 2, c], out)?;
        let rg = self.rg(top) || self.rg(bottom);
        self.push("fold_rows", value, Op::Fold(top, bottom), rg)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(x);
        self.push("reshape", value, Op::Reshape(x), rg)
    }

    /// Mean softmax cross-entropy over the batch.
    pub fn softmax_xent(&mut self, logits: Var, labels: &[usize]) -> Result<Var, TensorError> {
        let targets = labels.iter().map(|&l| (l, l, T::one())).collect();
        self.xent_impl(logits, targets)
    }

    /// `lam * CE(labels_a) + (1 - lam) * CE(labels_b)`, averaged over the batch.
    pub fn softmax_xent_mixed(
        &mut self,
        logits: Var,
        labels_a: &[usize],
        labels_b: &[usize],
        lam: T,
    ) -> Result<Var, TensorError> {
        if labels_a.len() != labels_b.len() {
            return Err(TensorError::shape("softmax_xent", "label lists differ in length"));
        }
        let targets = labels_a
            .iter()
            .zip(labels_b)
            .map(|(&a, &b)| (a, b, lam))
            .collect();
        self.xent_impl(logits, targets)
    }

    fn xent_impl(
        &mut self,
        logits: Var,
        targets: Vec<(usize, usize, T)>,
    ) -> Result<Var, TensorError> {
        let (n, k) = self.value(logits).dims2("softmax_xent")?;
        if targets.len() != n || targets.iter().any(|&(a, b, _)| a >= k || b >= k) {
            return Err(TensorError::shape(
                "softmax_xent",
                format!("need {n} labels in 0..{k}"),
            ));
        }
        let lg = self.value(logits).data();
        let mut probs = vec![T::zero(); n * k];
        let mut total = T::zero();
        for s in 0..n {
            let row = &lg[s * k..(s + 1) * k];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
            let log_z = max + sum.ln();
            for j in 0..k {
                probs[s * k + j] = (row[j] - max).exp() / sum;
            }
            let (a, b, lam) = targets[s];
            let la = log_z - row[a];
            let lb = log_z - row[b];
            total = total + lam * la + (T::one() - lam) * lb;
        }
        let value = Tensor::scalar(total / T::lit(n as f64));
        let rg = self.rg(logits);
        self.push(
            "softmax_xent",
            value,
            Op::SoftmaxXent {
                logits,
                probs,
                targets,
            },
            rg,
        )
    }

    /// Backpropagates from a scalar.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if self.value(loss).numel() != 1 {
            return Err(TensorError::Backward(format!(
                "loss must be a scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let seed = Tensor::from_vec(self.value(loss).shape(), vec![T::one()])?;
        self.backward_with(loss, seed)
    }

    /// Backpropagates an arbitrary upstream gradient `seed` for `root`.
    pub fn backward_with(&mut self, root: Var, seed: Tensor<T>) -> Result<(), TensorError> {
        if seed.shape() != self.value(root).shape() {
            return Err(TensorError::Backward("seed shape differs from root".into()));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[root.0] = Some(seed);
        for idx in (0..=root.0).rev() {
            let Some(gy) = self.grads[idx].take() else {
                continue;
            };
            check_finite("backward", gy.data())?;
            if self.nodes[idx].requires_grad {
                self.backprop_node(idx, gy.data())?;
            }
            self.grads[idx] = Some(gy);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, contribution: Vec<T>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(existing) => {
                for (e, c) in existing.data_mut().iter_mut().zip(contribution) {
                    *e = *e + c;
                }
            }
            slot @ None => {
                let shape = self.nodes[v.0].value.shape().to_vec();
                *slot = Some(Tensor {
                    shape,
                    data: contribution,
                });
            }
        }
    }

    fn backprop_node(&mut self, idx: usize, gy: &[T]) -> Result<(), TensorError> {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            &Op::Conv2d { x, k, geom } => {
                let (dx, dk) = conv2d_backward(
                    &geom,
                    self.value(x).data(),
                    self.value(k).data(),
                    gy,
                    self.rg(x),
                    self.rg(k),
                );
                if let Some(dx) = dx {
                    self.accumulate(x, dx);
                }
                if let Some(dk) = dk {
                    self.accumulate(k, dk);
                }
            }
            &Op::Affine { x, w, b } => {
                let (n, d) = self.value(x).dims2("affine")?;
                let e = self.value(b).numel();
                if self.rg(x) {
                    let mut dx = vec![T::zero(); n * d];
                    gemm(
                        n,
                        e,
                        d,
                        MatRef::row_major(gy, e),
                        MatRef::transposed(self.value(w).data(), e),
                        T::zero(),
                        &mut dx,
                    );
                    self.accumulate(x, dx);
                }
                if self.rg(w) {
                    let mut dw = vec![T::zero(); d * e];
                    gemm(
                        d,
                        n,
                        e,
                        MatRef::transposed(self.value(x).data(), d),
                        MatRef::row_major(gy, e),
                        T::zero(),
                        &mut dw,
                    );
                    self.accumulate(w, dw);
                }
                if self.rg(b) {
                    let mut db = vec![T::zero(); e];
                    for row in gy.chunks(e) {
                        for (acc, &g) in db.iter_mut().zip(row) {
                            *acc = *acc + g;
                        }
                    }
                    self.accumulate(b, db);
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let (x, gamma, beta, batch_stats) = (*x, *gamma, *beta, *batch_stats);
                let (n, c, h, w) = self.value(x).dims4("batchnorm2d")?;
                let plane = h * w;
                let count = T::lit((n * plane) as f64);
                let g = self.value(gamma).data();
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for s in 0..n {
                    for ch in 0..c {
                        let off = (s * c + ch) * plane;
                        for i in off..off + plane {
                            dgamma[ch] = dgamma[ch] + gy[i] * xhat[i];
                            dbeta[ch] = dbeta[ch] + gy[i];
                        }
                    }
                }
                let dx = self.rg(x).then(|| {
                    let mut dx = vec![T::zero(); gy.len()];
                    for s in 0..n {
                        for ch in 0..c {
                            let off = (s * c + ch) * plane;
                            for i in off..off + plane {
                                dx[i] = if batch_stats {
                                    // d xhat = gy * gamma; sums over the channel are
                                    // dbeta * gamma and dgamma * gamma.
                                    g[ch] * inv_std[ch]
                                        * (gy[i] - dbeta[ch] / count - xhat[i] * dgamma[ch] / count)
                                } else {
                                    g[ch] * inv_std[ch] * gy[i]
                                };
                            }
                        }
                    }
                    dx
                });
                if let Some(dx) = dx {
                    self.accumulate(x, dx);
                }
                self.accumulate(gamma, dgamma);
                self.accumulate(beta, dbeta);
            }
            &Op::Relu(x) => {
                let y = node.value.data();
                let dx = y
                    .iter()
                    .zip(gy)
                    .map(|(&y, &g)| if y > T::zero() { g } else { T::zero() })
                    .collect();
                self.accumulate(x, dx);
            }
            &Op::Sigmoid(x) => {
                let y = node.value.data();
                let dx = y
                    .iter()
                    .zip(gy)
                    .map(|(&y, &g)| g * y * (T::one() - y))
                    .collect();
                self.accumulate(x, dx);
            }
            &Op::Add(a, b) => {
                self.accumulate(a, gy.to_vec());
                self.accumulate(b, gy.to_vec());
            }
            &Op::MulChannel { u, alpha } => {
                let (_, _, h, w) = self.value(u).dims4("mul_channelwise")?;
                let plane = h * w;
                let us = self.value(u).data();
                let al = self.value(alpha).data();
                let du = self.rg(u).then(|| {
                    let mut du = vec![T::zero(); us.len()];
                    for (nc, &a) in al.iter().enumerate() {
                        for i in nc * plane..(nc + 1) * plane {
                            du[i] = a * gy[i];
                        }
                    }
                    du
                });
                let dalpha = self.rg(alpha).then(|| {
                    (0..al.len())
                        .map(|nc| {
                            let mut acc = T::zero();
                            for i in nc * plane..(nc + 1) * plane {
                                acc = acc + gy[i] * us[i];
                            }
                            acc
                        })
                        .collect::<Vec<T>>()
                });
                if let Some(du) = du {
                    self.accumulate(u, du);
                }
                if let Some(da) = dalpha {
                    self.accumulate(alpha, da);
                }
            }
            Op::MaskedMean { x, cells, scale } => {
                let x = *x;
                let (n, c, h, w) = self.value(x).dims4("masked_mean")?;
                let plane = h * w;
                let mut dx = vec![T::zero(); n * c * plane];
                for s in 0..n {
                    for ch in 0..c {
                        let g = gy[s * c + ch] * scale[s];
                        let map = &mut dx[(s * c + ch) * plane..(s * c + ch + 1) * plane];
                        for &i in &cells[s] {
                            map[i] = g;
                        }
                    }
                }
                self.accumulate(x, dx);
            }
            &Op::Fold(top, bottom) => {
                let (n, c) = self.value(top).dims2("fold_rows")?;
                let mut dt = Vec::with_capacity(n * c);
                let mut db = Vec::with_capacity(n * c);
                for s in 0..n {
                    dt.extend_from_slice(&gy[2 * s * c..(2 * s + 1) * c]);
                    db.extend_from_slice(&gy[(2 * s + 1) * c..(2 * s + 2) * c]);
                }
                self.accumulate(top, dt);
                self.accumulate(bottom, db);
            }
            &Op::Reshape(x) => {
                self.accumulate(x, gy.to_vec());
            }
            Op::SoftmaxXent {
                logits,
                probs,
                targets,
            } => {
                let logits = *logits;
                let (n, k) = self.value(logits).dims2("softmax_xent")?;
                let scale = gy[0] / T::lit(n as f64);
                let mut dl: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                for (s, &(a, b, lam)) in targets.iter().enumerate() {
                    dl[s * k + a] = dl[s * k + a] - lam * scale;
                    dl[s * k + b] = dl[s * k + b] - (T::one() - lam) * scale;
                }
                self.accumulate(logits, dl);
            }
        }
        Ok(())
    }
}
