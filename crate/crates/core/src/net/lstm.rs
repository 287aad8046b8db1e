//! One LSTM direction. Gate order in the packed weights is `[i, f, g, o]`:
//!
//! ```text
//! z   = x W + (h_prev * mask) U + b
//! i,f,o = sigmoid(z_i), sigmoid(z_f), sigmoid(z_o);  g = tanh(z_g)
//! c   = f * c_prev + i * g
//! h   = o * tanh(c)
//! ```
//!
//! `mask` is the variational recurrent dropout mask; it only scales the
//! recurrent product and stays fixed for a whole sequence.

use super::layers::sigmoid;
use super::{axpy, dot, Real};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<T> {
    pub input_dim: usize,
    pub hidden: usize,
    /// `input_dim x 4*hidden`, row-major.
    pub w: Vec<T>,
    /// `hidden x 4*hidden`, row-major.
    pub u: Vec<T>,
    /// `4*hidden`.
    pub b: Vec<T>,
}

impl<T: Real> LstmParams<T> {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmParams {
            input_dim,
            hidden,
            w: vec![T::zero(); input_dim * 4 * hidden],
            u: vec![T::zero(); hidden * 4 * hidden],
            b: vec![T::zero(); 4 * hidden],
        }
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub struct StepCache<T> {
    /// `h_prev * mask`, the vector that multiplied `U`.
    pub h_masked: Vec<T>,
    pub c_prev: Vec<T>,
    /// Activated gates `[i, f, g, o]`.
    pub gates: Vec<T>,
    pub tanh_c: Vec<T>,
}

pub fn lstm_step<T: Real>(
    x: &[T],
    h_prev: &[T],
    c_prev: &[T],
    p: &LstmParams<T>,
    rec_mask: &[T],
) -> Result<(Vec<T>, Vec<T>, StepCache<T>)> {
    let h = p.hidden;
    let g4 = 4 * h;
    if x.len() != p.input_dim || h_prev.len() != h || c_prev.len() != h || rec_mask.len() != h {
        return Err(Error::invalid("lstm_step: shape mismatch"));
    }
    if !x.iter().chain(h_prev).chain(c_prev).all(|v| v.is_finite()) {
        return Err(Error::Numerical("lstm_step: non-finite input".into()));
    }

    let mut z = p.b.clone();
    for (k, &xk) in x.iter().enumerate() {
        if xk != T::zero() {
            axpy(&mut z, xk, &p.w[k * g4..(k + 1) * g4]);
        }
    }
    let h_masked: Vec<T> = h_prev.iter().zip(rec_mask).map(|(&a, &m)| a * m).collect();
    for (k, &hk) in h_masked.iter().enumerate() {
        if hk != T::zero() {
            axpy(&mut z, hk, &p.u[k * g4..(k + 1) * g4]);
        }
    }

    for v in &mut z[..2 * h] {
        *v = sigmoid(*v);
    }
    for v in &mut z[2 * h..3 * h] {
        *v = v.tanh();
    }
    for v in &mut z[3 * h..] {
        *v = sigmoid(*v);
    }

    let mut c = vec![T::zero(); h];
    let mut tanh_c = vec![T::zero(); h];
    let mut h_out = vec![T::zero(); h];
    for j in 0..h {
        let (i, f, g, o) = (z[j], z[h + j], z[2 * h + j], z[3 * h + j]);
        c[j] = f * c_prev[j] + i * g;
        tanh_c[j] = c[j].tanh();
        h_out[j] = o * tanh_c[j];
    }
    if !c.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("lstm_step: non-finite cell state".into()));
    }

    let cache = StepCache {
        h_masked,
        c_prev: c_prev.to_vec(),
        gates: z,
        tanh_c,
    };
    Ok((h_out, c, cache))
}

/// Backpropagate one step. Accumulates into `grads` and returns
/// `(dx, dh_prev, dc_prev)`.
pub fn lstm_step_backward<T: Real>(
    x: &[T],
    cache: &StepCache<T>,
    dh: &[T],
    dc: &[T],
    p: &LstmParams<T>,
    rec_mask: &[T],
    grads: &mut LstmParams<T>,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let h = p.hidden;
    let g4 = 4 * h;
    let one = T::one();
    let gates = &cache.gates;

    let mut dz = vec![T::zero(); g4];
    let mut dc_prev = vec![T::zero(); h];
    for j in 0..h {
        let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
        let tc = cache.tanh_c[j];
        let d_o = dh[j] * tc;
        let d_c = dc[j] + dh[j] * o * (one - tc * tc);
        dz[j] = d_c * g * i * (one - i);
        dz[h + j] = d_c * cache.c_prev[j] * f * (one - f);
        dz[2 * h + j] = d_c * i * (one - g * g);
        dz[3 * h + j] = d_o * o * (one - o);
        dc_prev[j] = d_c * f;
    }

    for (gb, &d) in grads.b.iter_mut().zip(&dz) {
        *gb += d;
    }
    let mut dx = vec![T::zero(); p.input_dim];
    for (k, &xk) in x.iter().enumerate() {
        if xk != T::zero() {
            axpy(&mut grads.w[k * g4..(k + 1) * g4], xk, &dz);
        }
        dx[k] = dot(&p.w[k * g4..(k + 1) * g4], &dz);
    }
    let mut dh_prev = vec![T::zero(); h];
    for k in 0..h {
        let hk = cache.h_masked[k];
        if hk != T::zero() {
            axpy(&mut grads.u[k * g4..(k + 1) * g4], hk, &dz);
        }
        if rec_mask[k] != T::zero() {
            dh_prev[k] = dot(&p.u[k * g4..(k + 1) * g4], &dz) * rec_mask[k];
        }
    }
    (dx, dh_prev, dc_prev)
}
