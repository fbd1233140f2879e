use super::{Element, Tensor};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// SGD with momentum and L2 weight decay, plus a step learning-rate
/// schedule (`lr = initial_lr * gamma^(epoch / step_epochs)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub initial_lr: f64,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub step_epochs: usize,
    pub gamma: f64,
    pub epoch: usize,
    /// Stored outside the JSON header by checkpoints.
    #[serde(skip)]
    pub momentum_buffers: Vec<Vec<f32>>,
}

impl OptimizerState {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64, step_epochs: usize, gamma: f64) -> Self {
        Self {
            initial_lr: lr,
            lr,
            momentum,
            weight_decay,
            step_epochs: step_epochs.max(1),
            gamma,
            epoch: 0,
            momentum_buffers: Vec::new(),
        }
    }

    /// One update over all parameters:
    /// `v = momentum * v + (grad + wd * p)`, `p -= lr * v`.
    pub fn step<T: Element>(&mut self, params: &mut [Tensor<T>], grads: &[Option<&Tensor<T>>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::InvalidState(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.momentum_buffers.is_empty() {
            self.momentum_buffers = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        if self.momentum_buffers.len() != params.len() {
            return Err(Error::InvalidState("momentum buffers do not match parameters".into()));
        }
        let (lr, mu, wd) = (self.lr, self.momentum, self.weight_decay);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let g = g.ok_or_else(|| Error::InvalidState(format!("missing gradient for parameter {i}")))?;
            let buf = &mut self.momentum_buffers[i];
            if g.shape() != p.shape() || buf.len() != p.len() {
                return Err(Error::ShapeMismatch {
                    op: "sgd_step",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            for ((pv, &gv), v) in p.data_mut().iter_mut().zip(g.data()).zip(buf.iter_mut()) {
                let d = gv.as_f64() + wd * pv.as_f64();
                let nv = mu * (*v as f64) + d;
                *v = nv as f32;
                *pv = T::from_f64(pv.as_f64() - lr * nv);
            }
        }
        Ok(())
    }

    /// Advances the epoch counter and applies the step schedule.
    pub fn end_epoch(&mut self) {
        self.epoch += 1;
        self.lr = self.lr_at(self.epoch);
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.initial_lr * self.gamma.powi((epoch / self.step_epochs) as i32)
    }
}
