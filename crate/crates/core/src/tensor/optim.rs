use super::{Scalar, Tensor};
use crate::error::TensorError;

/// SGD with Nesterov momentum and L2 weight decay folded into the gradient:
///
/// ```text
/// v <- m v + g + wd p
/// p <- p - lr (g + wd p + m v)
/// ```
#[derive(Clone, Debug)]
pub struct SgdNesterov<T> {
    pub momentum: T,
    pub weight_decay: T,
    velocity: Vec<Vec<T>>,
}

impl<T: Scalar> SgdNesterov<T> {
    pub fn new(momentum: T, weight_decay: T) -> Self {
        SgdNesterov {
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    /// Applies one update. `grads` are consumed, so nothing carries over to
    /// the next step except the velocity buffers.
    pub fn step(
        &mut self,
        params: &mut [Tensor<T>],
        grads: Vec<Tensor<T>>,
        lr: T,
    ) -> Result<(), TensorError> {
        if grads.len() != params.len() {
            return Err(TensorError::shape(
                "sgd_nesterov_step",
                format!("{} params but {} grads", params.len(), grads.len()),
            ));
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| vec![T::zero(); p.numel()]).collect();
        }
        let (m, wd) = (self.momentum, self.weight_decay);
        for ((p, g), v) in params.iter_mut().zip(&grads).zip(&mut self.velocity) {
            if p.shape() != g.shape() || v.len() != p.numel() {
                return Err(TensorError::shape(
                    "sgd_nesterov_step",
                    format!("param {:?} vs grad {:?}", p.shape(), g.shape()),
                ));
            }
            for ((pi, &gi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(v.iter_mut()) {
                let d = gi + wd * *pi;
                *vi = m * *vi + d;
                *pi = *pi - lr * (d + m * *vi);
            }
        }
        Ok(())
    }
}
