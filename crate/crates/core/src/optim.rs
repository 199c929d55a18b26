//! Adam with decoupled weight decay, and the warmup + cosine schedule.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Moment buffers keyed by parameter name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: BTreeMap<String, Vec<f64>>,
    pub second_moment: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            ..Default::default()
        }
    }
}

/// Applies one Adam update to every parameter that requires a gradient.
///
/// Parameters with `requires_grad == false` are left untouched. A trainable
/// parameter that received no gradient is treated as having a zero gradient.
pub fn adam_step(params: &[(String, Tensor)], state: &mut AdamState, lr: f64) -> Result<()> {
    if !(lr >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "learning rate {lr} must be >= 0"
        )));
    }
    for (name, p) in params {
        if let Some(g) = p.grad() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    param: name.clone(),
                });
            }
        }
    }
    state.step += 1;
    let AdamConfig {
        beta1,
        beta2,
        eps,
        weight_decay,
    } = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for (name, p) in params {
        if !p.requires_grad() {
            continue;
        }
        let n = p.numel();
        let g = p.grad().unwrap_or_else(|| vec![0.0; n]);
        let m = state
            .first_moment
            .entry(name.clone())
            .or_insert_with(|| vec![0.0; n]);
        let v = state
            .second_moment
            .entry(name.clone())
            .or_insert_with(|| vec![0.0; n]);
        if m.len() != n || v.len() != n {
            return Err(Error::shape(
                "adam_step",
                format!("moment buffers for `{name}` do not match {n} elements"),
            ));
        }
        let mut data = p.data_mut();
        for i in 0..n {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            data[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * data[i]);
        }
    }
    Ok(())
}

/// Linear warmup to `peak_lr` over `warmup_frac · total_steps`, then cosine
/// decay to zero at `total_steps`.
pub fn lr_schedule(step: usize, total_steps: usize, warmup_frac: f64, peak_lr: f64) -> f64 {
    let total = total_steps.max(1) as f64;
    let step = (step as f64).min(total);
    let warmup = warmup_frac * total;
    if step < warmup {
        return peak_lr * step / warmup;
    }
    let span = total - warmup;
    if span <= 0.0 {
        return peak_lr;
    }
    let progress = (step - warmup) / span;
    peak_lr * 0.5 * (1.0 + (PI * progress).cos())
}
