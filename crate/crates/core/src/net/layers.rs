use rand::Rng;

use super::{dot, Real};
use crate::{Error, Result};

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Look up the embedding rows of `indices`, concatenated (`len x embed_dim`).
pub fn embed<T: Real>(indices: &[u32], embedding: &[T], embed_dim: usize) -> Result<Vec<T>> {
    let rows = embedding.len() / embed_dim;
    let mut out = Vec::with_capacity(indices.len() * embed_dim);
    for &i in indices {
        let i = i as usize;
        if i >= rows {
            return Err(Error::invalid(format!("token index {i} out of range for vocabulary of {rows}")));
        }
        out.extend_from_slice(&embedding[i * embed_dim..(i + 1) * embed_dim]);
    }
    Ok(out)
}

/// Channel-wise inverted dropout over a `len x channels` sequence. Each
/// channel is zeroed at every timestep with probability `rate`; survivors
/// are scaled by `1 / (1 - rate)`. Returns the per-channel mask (all ones
/// when not training).
pub fn spatial_dropout<T: Real, R: Rng + ?Sized>(
    seq: &mut [T],
    channels: usize,
    rate: f64,
    rng: &mut R,
    training: bool,
) -> Vec<T> {
    let mask = dropout_mask(channels, rate, rng, training);
    if training && rate > 0.0 {
        for row in seq.chunks_mut(channels) {
            for (x, &m) in row.iter_mut().zip(&mask) {
                *x *= m;
            }
        }
    }
    mask
}

/// Inverted-dropout mask of length `n`.
pub(crate) fn dropout_mask<T: Real, R: Rng + ?Sized>(n: usize, rate: f64, rng: &mut R, training: bool) -> Vec<T> {
    if !training || rate <= 0.0 {
        return vec![T::one(); n];
    }
    let keep = T::of(1.0 / (1.0 - rate));
    (0..n)
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect()
}

/// `(logit, sigmoid(logit))`.
pub fn head_forward<T: Real>(features: &[T], w: &[T], b: T) -> (T, T) {
    let logit = dot(features, w) + b;
    (logit, sigmoid(logit))
}

/// Binary cross-entropy from a logit: `softplus(z) - y z`.
pub fn bce_loss<T: Real>(logit: T, label: T) -> T {
    softplus(logit) - label * logit
}
