//! SGD with momentum and Adam, operating on the flat parameter layout.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::fmath;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum OptimizerKind {
    SgdMomentum,
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    /// SGD momentum coefficient.
    pub momentum: f64,
    /// Adam moment decay rates.
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// L2 penalty added to gradients before the update.
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::SgdMomentum,
            learning_rate: 0.01,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            batch_size: 16,
            epochs: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.learning_rate > 0.0) {
            return Err("learning_rate must be > 0".into());
        }
        if self.batch_size < 1 {
            return Err("batch_size must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err("momentum must be in [0, 1)".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err("betas must be in [0, 1)".into());
        }
        if self.weight_decay < 0.0 {
            return Err("weight_decay must be >= 0".into());
        }
        Ok(())
    }
}

/// Optimizer state sized for one model's flat parameters.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    momentum: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    weight_decay: f64,
    /// SGD velocity, or Adam first moment.
    m: Vec<f64>,
    /// Adam second moment (unused for SGD).
    v: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn new(cfg: &TrainConfig, param_count: usize) -> Self {
        Optimizer {
            kind: cfg.optimizer,
            learning_rate: cfg.learning_rate,
            momentum: cfg.momentum,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            weight_decay: cfg.weight_decay,
            m: vec![0.0; param_count],
            v: if cfg.optimizer == OptimizerKind::Adam {
                vec![0.0; param_count]
            } else {
                Vec::new()
            },
            t: 0,
        }
    }

    /// One update step. SGD: v <- mu*v - lr*g, p <- p + v. Adam:
    /// bias-corrected first/second moments.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "optimizer/param length mismatch");
        assert_eq!(params.len(), grads.len(), "grad length mismatch");
        match self.kind {
            OptimizerKind::SgdMomentum => {
                for i in 0..params.len() {
                    let g = grads[i] + self.weight_decay * params[i];
                    self.m[i] = self.momentum * self.m[i] - self.learning_rate * g;
                    params[i] += self.m[i];
                }
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let bc1 = 1.0 - pow_u(self.beta1, self.t);
                let bc2 = 1.0 - pow_u(self.beta2, self.t);
                for i in 0..params.len() {
                    let g = grads[i] + self.weight_decay * params[i];
                    self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                    self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                    let m_hat = self.m[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    params[i] -= self.learning_rate * m_hat / (fmath::sqrt(v_hat) + self.epsilon);
                }
            }
        }
    }
}

fn pow_u(base: f64, exp: u64) -> f64 {
    let mut acc = 1.0;
    let mut b = base;
    let mut e = exp;
    while e > 0 {
        if e & 1 == 1 {
            acc *= b;
        }
        b *= b;
        e >>= 1;
    }
    acc
}
