use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use super::Real;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

/// First and second moments, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: ModelParams<T>,
    pub v: ModelParams<T>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        AdamState {
            m: ModelParams::zeros(params.dims),
            v: ModelParams::zeros(params.dims),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update:
/// `m <- b1 m + (1-b1) g`, `v <- b2 v + (1-b2) g^2`,
/// `theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)`.
pub fn adam_step<T: Real>(
    params: &mut ModelParams<T>,
    grads: &ModelParams<T>,
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.dims != grads.dims || params.dims != state.m.dims {
        return Err(Error::invalid("adam_step: shape mismatch"));
    }
    if !grads.all_finite() {
        return Err(Error::Numerical("adam_step: non-finite gradient".into()));
    }
    state.t += 1;
    let t = state.t as f64;
    let bc1 = T::of(1.0 - cfg.beta1.powf(t));
    let bc2 = T::of(1.0 - cfg.beta2.powf(t));
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let (one_b1, one_b2) = (T::of(1.0 - cfg.beta1), T::of(1.0 - cfg.beta2));
    let (lr, eps) = (T::of(cfg.lr), T::of(cfg.epsilon));

    let g_blocks = grads.blocks();
    let m_blocks = state.m.blocks_mut();
    let v_blocks = state.v.blocks_mut();
    for (((theta, g), m), v) in params.blocks_mut().into_iter().zip(g_blocks).zip(m_blocks).zip(v_blocks) {
        for i in 0..theta.len() {
            let gi = g[i];
            m[i] = b1 * m[i] + one_b1 * gi;
            v[i] = b2 * v[i] + one_b2 * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
