use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};

use crate::numerics::math;
use crate::numerics::params::ParamStore;
use crate::{Result, Tensor};

/// Scales every gradient by `max_norm / g` when the global L2 norm `g`
/// exceeds `max_norm`. Returns the scale that was applied (1 when the
/// gradients were left alone).
pub fn clip_global_norm(params: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = params.grad_norm();
    if norm <= max_norm || norm == 0.0 {
        return 1.0;
    }
    let scale = max_norm / norm;
    for (_, _, g) in params.iter_mut() {
        g.data_mut().iter_mut().for_each(|v| *v *= scale);
    }
    scale
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: BTreeMap<String, Tensor>,
    second: BTreeMap<String, Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    pub fn first_moment(&self, name: &str) -> Option<&Tensor> {
        self.first.get(name)
    }

    pub fn second_moment(&self, name: &str) -> Option<&Tensor> {
        self.second.get(name)
    }
}

/// One bias-corrected Adam update using the gradients currently in `params`.
pub fn adam_step(params: &mut ParamStore, state: &mut AdamState) -> Result<()> {
    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let bc1 = 1.0 - math::powi(beta1, state.step as i32);
    let bc2 = 1.0 - math::powi(beta2, state.step as i32);
    for (name, value, grad) in params.iter_mut() {
        let m = state
            .first
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(value.shape()));
        let v = state
            .second
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(value.shape()));
        m.same_shape(value)?;
        for (((p, &g), mi), vi) in value
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = beta1 * *mi + (1.0 - beta1) * g;
            *vi = beta2 * *vi + (1.0 - beta2) * g * g;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *p -= lr * m_hat / (math::sqrt(v_hat) + eps);
        }
    }
    Ok(())
}
