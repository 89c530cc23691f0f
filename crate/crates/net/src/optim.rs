use serde::{Deserialize, Serialize};

use crate::tensor::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Optimizer state for one flat parameter buffer.
#[derive(Debug, Clone)]
pub enum Optimizer<T> {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64, step: i32, m: Vec<T>, v: Vec<T> },
}

impl<T: Real> Optimizer<T> {
    /// Adam uses the usual constants (0.9, 0.999, 1e-8).
    pub fn new(kind: OptimizerKind, lr: f64, len: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
            OptimizerKind::Adam => Optimizer::Adam {
                lr,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                step: 0,
                m: vec![T::zero(); len],
                v: vec![T::zero(); len],
            },
        }
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        match self {
            Optimizer::Sgd { lr } => {
                let lr = T::of(*lr);
                for (p, &g) in params.iter_mut().zip(grads) {
                    *p = *p - lr * g;
                }
            }
            Optimizer::Adam { lr, beta1, beta2, eps, step, m, v } => {
                *step += 1;
                let (b1, b2) = (T::of(*beta1), T::of(*beta2));
                let c1 = T::of(1.0 - beta1.powi(*step));
                let c2 = T::of(1.0 - beta2.powi(*step));
                let (lr, eps, one) = (T::of(*lr), T::of(*eps), T::one());
                for i in 0..params.len() {
                    let g = grads[i];
                    m[i] = b1 * m[i] + (one - b1) * g;
                    v[i] = b2 * v[i] + (one - b2) * g * g;
                    let mhat = m[i] / c1;
                    let vhat = v[i] / c2;
                    params[i] = params[i] - lr * mhat / (vhat.sqrt() + eps);
                }
            }
        }
    }
}
