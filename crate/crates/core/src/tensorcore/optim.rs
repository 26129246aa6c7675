//! Adam with decoupled weight decay, and global-norm gradient clipping.

use super::ParamGroup;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// One Adam step. Weight decay is applied to the parameters first
/// (`θ ← θ − lr·wd·θ`), then the bias-corrected moment update.
pub fn adam_step(params: &mut ParamGroup, grads: &[Vec<f64>], cfg: &AdamConfig) -> Result<()> {
    if !(0.0 < cfg.beta1 && cfg.beta1 < 1.0 && 0.0 < cfg.beta2 && cfg.beta2 < 1.0) {
        return Err(Error::Config(format!(
            "adam betas must lie in (0,1), got {} / {}",
            cfg.beta1, cfg.beta2
        )));
    }
    if grads.len() != params.len() {
        return Err(Error::shape("adam_step", &[params.len()], &[grads.len()]));
    }
    let (tensors, m, v, step) = params.adam_parts();
    *step += 1;
    let t = *step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (i, g) in grads.iter().enumerate() {
        let theta = tensors[i].data_mut();
        if g.len() != theta.len() {
            return Err(Error::shape("adam_step", &[theta.len()], &[g.len()]));
        }
        for k in 0..theta.len() {
            theta[k] -= cfg.lr * cfg.weight_decay * theta[k];
            m[i][k] = cfg.beta1 * m[i][k] + (1.0 - cfg.beta1) * g[k];
            v[i][k] = cfg.beta2 * v[i][k] + (1.0 - cfg.beta2) * g[k] * g[k];
            let m_hat = m[i][k] / bc1;
            let v_hat = v[i][k] / bc2;
            theta[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        tensors[i].round_storage();
    }
    Ok(())
}

pub fn global_norm(grads: &[Vec<f64>]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients by `max_norm/‖g‖` when `‖g‖ > max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> Result<f64> {
    if max_norm <= 0.0 {
        return Err(Error::Config(format!("max_norm must be positive, got {max_norm}")));
    }
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().flat_map(|g| g.iter_mut()).for_each(|v| *v *= s);
    }
    Ok(norm)
}
