//! Adam with bias correction and coupled weight decay.

use crate::error::{Error, Result};
use crate::params::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Added to the gradient before the moment updates (coupled form).
    pub weight_decay: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-5,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 1e-8,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr.is_finite()
            && self.lr >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.weight_decay.is_finite()
            && self.weight_decay >= 0.0
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::spec("adam constants out of range"))
        }
    }
}

/// Per-parameter first and second moments, aligned with a `ParamSet`'s
/// tensor order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(params: &ParamSet<f32>) -> Self {
        let m = params.iter().map(|t| vec![0.0; t.values.len()]).collect();
        let v = params.iter().map(|t| vec![0.0; t.values.len()]).collect();
        AdamState { step: 0, m, v }
    }
}

/// One Adam update over every tensor. Deterministic: identical
/// (params, grads, state, cfg) always produce identical results.
pub fn adam_step(
    params: &mut ParamSet<f32>,
    grads: &[Vec<f32>],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    cfg.validate()?;
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::shape(format!(
            "adam alignment: {} tensors, {} gradients, {} moment rows",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, g) in grads.iter().enumerate() {
        if g.len() != params.entry(i).values.len() {
            return Err(Error::shape(format!(
                "adam gradient {i} has {} values, tensor has {}",
                g.len(),
                params.entry(i).values.len()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
    let wd = cfg.weight_decay as f32;
    let eps = cfg.epsilon as f32;
    let lr = cfg.lr as f32;
    let (inv_bc1, inv_bc2) = ((1.0 / bc1) as f32, (1.0 / bc2) as f32);
    for i in 0..params.len() {
        let tensor = params.entry_mut(i);
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for (j, p) in tensor.values.iter_mut().enumerate() {
            let g = grads[i][j] + wd * *p;
            m[j] = b1 * m[j] + (1.0 - b1) * g;
            v[j] = b2 * v[j] + (1.0 - b2) * g * g;
            let mhat = m[j] * inv_bc1;
            let vhat = v[j] * inv_bc2;
            *p -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
