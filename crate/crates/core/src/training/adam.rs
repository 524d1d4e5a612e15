use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::params::ParamSet;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !unit(self.beta1) || !unit(self.beta2) || self.eps <= 0.0 {
            return Err(Error::Config(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

/// First and second moment estimates for every trainable parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let zeros = |p: &ParamSet| {
            p.iter()
                .filter(|(_, t)| t.requires_grad())
                .map(|(n, t)| (n.clone(), vec![0.0; t.numel()]))
                .collect()
        };
        AdamState {
            config,
            t: 0,
            m: zeros(params),
            v: zeros(params),
        }
    }

    /// One bias-corrected update from the accumulated gradients, which are
    /// then zeroed.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (name, tensor) in params.iter_mut() {
            if !tensor.requires_grad() {
                tensor.zero_grad();
                continue;
            }
            let (Some(m), Some(v)) = (self.m.get_mut(name), self.v.get_mut(name)) else {
                return Err(Error::Contract(format!("no Adam moments for parameter `{name}`")));
            };
            if m.len() != tensor.numel() {
                return Err(Error::Contract(format!("Adam moments for `{name}` have the wrong size")));
            }
            let grad = tensor.grad().to_vec();
            for (((p, g), mi), vi) in tensor.values_mut().iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            tensor.zero_grad();
        }
        Ok(())
    }
}

/// Scales all gradients so their global L2 norm is at most `limit`.
/// Returns the norm before scaling.
pub fn clip_grad_norm(params: &mut ParamSet, limit: f64) -> f64 {
    let norm = params
        .iter()
        .flat_map(|(_, t)| t.grad().iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > limit {
        let scale = limit / norm;
        for (_, t) in params.iter_mut() {
            t.grad_mut().iter_mut().for_each(|g| *g *= scale);
        }
    }
    norm
}
