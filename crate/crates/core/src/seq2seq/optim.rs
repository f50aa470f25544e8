use serde::{Deserialize, Serialize};

use super::linalg::Real;
use super::Seq2SeqError;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.98;
pub const ADAM_EPS: f64 = 1e-9;

/// `base_lr · min(step^-0.5, step · warmup^-1.5)`; zero before the first step.
pub fn learning_rate(base_lr: f64, warmup_steps: u64, step: u64) -> f64 {
    if step == 0 {
        return 0.0;
    }
    let s = step as f64;
    let w = warmup_steps.max(1) as f64;
    base_lr * s.powf(-0.5).min(s * w.powf(-1.5))
}

/// Hyper-parameters of the update rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub base_lr: f64,
    pub warmup_steps: u64,
    /// Rescale gradients whose global norm exceeds this.
    #[serde(default)]
    pub clip_norm: Option<f64>,
}

/// Adam moments and step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub step: u64,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub schedule: Schedule,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(num_params: usize, schedule: Schedule) -> Self {
        OptimizerState {
            step: 0,
            m: vec![T::zero(); num_params],
            v: vec![T::zero(); num_params],
            schedule,
        }
    }

    /// Learning rate of the next update.
    pub fn next_lr(&self) -> f64 {
        learning_rate(self.schedule.base_lr, self.schedule.warmup_steps, self.step + 1)
    }

    /// One Adam update; returns the gradient norm before clipping.
    pub fn apply(&mut self, params: &mut [T], grad: &[T]) -> Result<f64, Seq2SeqError> {
        assert_eq!(params.len(), grad.len());
        assert_eq!(params.len(), self.m.len());
        let norm = grad.iter().map(|g| g.f64() * g.f64()).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Seq2SeqError::NonFinite(format!("gradient at step {}", self.step + 1)));
        }
        let clip = match self.schedule.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        self.step += 1;
        let lr = learning_rate(self.schedule.base_lr, self.schedule.warmup_steps, self.step);
        let t = self.step as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        let (b1, b2) = (T::of(ADAM_BETA1), T::of(ADAM_BETA2));
        let step_size = T::of(lr / bc1);
        let inv_bc2 = T::of(1.0 / bc2);
        let eps = T::of(ADAM_EPS);
        let clip = T::of(clip);
        for i in 0..params.len() {
            let g = grad[i] * clip;
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            params[i] -= step_size * self.m[i] / ((self.v[i] * inv_bc2).sqrt() + eps);
        }
        Ok(norm)
    }
}
