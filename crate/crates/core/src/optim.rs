//! Adam with linear warmup.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::params::ParamSet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Steps over which the learning rate ramps linearly from `lr / warmup` to `lr`.
    pub warmup_steps: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            warmup_steps: 0,
        }
    }
}

pub struct Adam {
    config: AdamConfig,
    step: usize,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamSet<f32>) -> Adam {
        let zeros = || {
            params
                .tensors()
                .iter()
                .map(|t| vec![0.0; t.numel()])
                .collect()
        };
        Adam {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Learning rate used by the 1-indexed step `t`.
    pub fn learning_rate_at(&self, t: usize) -> f64 {
        let warm = self.config.warmup_steps;
        if warm > 0 && t < warm {
            self.config.learning_rate * t as f64 / warm as f64
        } else {
            self.config.learning_rate
        }
    }

    /// Apply one update. Parameters without a gradient still advance their
    /// moment estimates with a zero gradient.
    pub fn step(&mut self, params: &mut ParamSet<f32>, grads: &[Option<&Tensor<f32>>]) {
        self.step += 1;
        let c = self.config;
        let lr = self.learning_rate_at(self.step);
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (i, t) in params.tensors_mut().iter_mut().enumerate() {
            let g = grads.get(i).copied().flatten();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (k, w) in t.data_mut().iter_mut().enumerate() {
                let gk = g.map_or(0.0, |g| f64::from(g.data()[k]));
                m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * gk;
                v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * gk * gk;
                let update = lr * (m[k] / bc1) / ((v[k] / bc2).sqrt() + c.eps);
                *w = (f64::from(*w) - update) as f32;
            }
        }
    }
}
