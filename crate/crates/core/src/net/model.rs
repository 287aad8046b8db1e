//! Whole-model forward and backward for one encoded sentence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{bce_loss, dropout_mask, embed, head_forward, sigmoid, spatial_dropout};
use super::lstm::{lstm_step, lstm_step_backward, StepCache};
use super::params::ModelParams;
use super::{axpy, Real};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutConfig {
    pub spatial_rate: f64,
    pub recurrent_rate: f64,
    pub seed: u64,
}

impl Default for DropoutConfig {
    fn default() -> Self {
        DropoutConfig {
            spatial_rate: 0.2,
            recurrent_rate: 0.4,
            seed: 0,
        }
    }
}

impl DropoutConfig {
    pub fn none() -> Self {
        DropoutConfig {
            spatial_rate: 0.0,
            recurrent_rate: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("spatial", self.spatial_rate), ("recurrent", self.recurrent_rate)] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::invalid(format!("{name} dropout rate {r} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DirectionCache<T> {
    /// Variational mask, constant across the sequence.
    pub rec_mask: Vec<T>,
    /// In processing order (reversed positions for the backward direction).
    pub steps: Vec<StepCache<T>>,
}

#[derive(Debug, Clone)]
pub struct SampleCache<T> {
    pub indices: Vec<u32>,
    pub spatial_mask: Vec<T>,
    /// Dropped-out embeddings, `len x embed_dim`.
    pub inputs: Vec<T>,
    pub fwd: DirectionCache<T>,
    pub bwd: DirectionCache<T>,
}

#[derive(Debug, Clone)]
pub struct Forward<T> {
    pub logit: T,
    pub score: T,
    /// `[h_fwd(T); h_bwd(1)]`.
    pub features: Vec<T>,
    cache: Option<SampleCache<T>>,
}

impl<T: Real> Forward<T> {
    pub fn cache(&self) -> Option<&SampleCache<T>> {
        self.cache.as_ref()
    }

    pub fn drop_cache(mut self) -> Self {
        self.cache = None;
        self
    }

    pub fn loss(&self, label: T) -> T {
        bce_loss(self.logit, label)
    }
}

/// Run one direction over `len` timesteps in the given position order.
fn run_direction<T: Real>(
    inputs: &[T],
    positions: impl Iterator<Item = usize>,
    p: &super::LstmParams<T>,
    rec_mask: Vec<T>,
) -> Result<(Vec<T>, DirectionCache<T>)> {
    let e = p.input_dim;
    let mut h = vec![T::zero(); p.hidden];
    let mut c = vec![T::zero(); p.hidden];
    let mut steps = Vec::new();
    for t in positions {
        let (nh, nc, cache) = lstm_step(&inputs[t * e..(t + 1) * e], &h, &c, p, &rec_mask)?;
        steps.push(cache);
        h = nh;
        c = nc;
    }
    Ok((h, DirectionCache { rec_mask, steps }))
}

/// Bidirectional pass over a `len x embed_dim` sequence. Returns the
/// concatenated final hidden states and both direction caches.
pub fn bilstm_forward<T: Real, R: Rng + ?Sized>(
    seq: &[T],
    params: &ModelParams<T>,
    dropout: &DropoutConfig,
    rng: &mut R,
    training: bool,
) -> Result<(Vec<T>, DirectionCache<T>, DirectionCache<T>)> {
    let e = params.dims.embed_dim;
    let h = params.dims.hidden_units;
    let len = seq.len() / e;
    if len == 0 {
        return Err(Error::invalid("bilstm_forward: empty sequence"));
    }
    let fwd_mask = dropout_mask(h, dropout.recurrent_rate, rng, training);
    let bwd_mask = dropout_mask(h, dropout.recurrent_rate, rng, training);
    let (h_fwd, fwd) = run_direction(seq, 0..len, &params.fwd, fwd_mask)?;
    let (h_bwd, bwd) = run_direction(seq, (0..len).rev(), &params.bwd, bwd_mask)?;
    let mut features = h_fwd;
    features.extend(h_bwd);
    Ok((features, fwd, bwd))
}

/// Forward one sentence (its non-padding indices). With `training` the
/// dropout masks are drawn from `rng` and the cache is kept for
/// [`backward_sample`]; otherwise no randomness is consumed and no cache is
/// retained.
pub fn forward<T: Real, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    indices: &[u32],
    dropout: &DropoutConfig,
    rng: &mut R,
    training: bool,
) -> Result<Forward<T>> {
    let e = params.dims.embed_dim;
    let mut inputs = embed(indices, &params.embedding, e)?;
    if inputs.is_empty() {
        return Err(Error::invalid("cannot score an empty sentence"));
    }
    let spatial_mask = spatial_dropout(&mut inputs, e, dropout.spatial_rate, rng, training);
    let (features, fwd, bwd) = bilstm_forward(&inputs, params, dropout, rng, training)?;
    let (logit, score) = head_forward(&features, &params.dense_w, params.dense_b[0]);
    if !logit.is_finite() {
        return Err(Error::Numerical("non-finite logit".into()));
    }
    let cache = training.then(|| SampleCache {
        indices: indices.to_vec(),
        spatial_mask,
        inputs,
        fwd,
        bwd,
    });
    Ok(Forward {
        logit,
        score,
        features,
        cache,
    })
}

/// Deterministic inference score.
pub fn predict<T: Real>(params: &ModelParams<T>, indices: &[u32]) -> Result<T> {
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    Ok(forward(params, indices, &DropoutConfig::none(), &mut unused, false)?.score)
}

fn backward_direction<T: Real>(
    cache: &DirectionCache<T>,
    inputs: &[T],
    positions: impl Iterator<Item = usize>,
    dh_final: &[T],
    p: &super::LstmParams<T>,
    grads: &mut super::LstmParams<T>,
    d_inputs: &mut [T],
) {
    let e = p.input_dim;
    let mut dh = dh_final.to_vec();
    let mut dc = vec![T::zero(); p.hidden];
    let positions: Vec<usize> = positions.collect();
    for (step, &t) in cache.steps.iter().zip(&positions).rev() {
        let x = &inputs[t * e..(t + 1) * e];
        let (dx, dh_prev, dc_prev) = lstm_step_backward(x, step, &dh, &dc, p, &cache.rec_mask, grads);
        for (d, v) in d_inputs[t * e..(t + 1) * e].iter_mut().zip(dx) {
            *d += v;
        }
        dh = dh_prev;
        dc = dc_prev;
    }
}

/// Accumulate the gradient of `dlogit * logit` into `grads`.
pub fn backward_sample<T: Real>(
    params: &ModelParams<T>,
    fwd: &Forward<T>,
    dlogit: T,
    grads: &mut ModelParams<T>,
) -> Result<()> {
    let cache = fwd
        .cache
        .as_ref()
        .ok_or_else(|| Error::invalid("backward requires a training-mode forward cache"))?;
    let h = params.dims.hidden_units;
    let e = params.dims.embed_dim;
    let len = cache.indices.len();

    axpy(&mut grads.dense_w, dlogit, &fwd.features);
    grads.dense_b[0] += dlogit;
    let d_features: Vec<T> = params.dense_w.iter().map(|&w| w * dlogit).collect();

    let mut d_inputs = vec![T::zero(); len * e];
    backward_direction(&cache.fwd, &cache.inputs, 0..len, &d_features[..h], &params.fwd, &mut grads.fwd, &mut d_inputs);
    backward_direction(
        &cache.bwd,
        &cache.inputs,
        (0..len).rev(),
        &d_features[h..],
        &params.bwd,
        &mut grads.bwd,
        &mut d_inputs,
    );

    for (t, &row) in cache.indices.iter().enumerate() {
        let row = row as usize;
        let dst = &mut grads.embedding[row * e..(row + 1) * e];
        for ((g, &d), &m) in dst.iter_mut().zip(&d_inputs[t * e..(t + 1) * e]).zip(&cache.spatial_mask) {
            *g += d * m;
        }
    }
    Ok(())
}

/// Mean-BCE gradient over a batch, accumulated into `grads` in sample
/// order. Returns the mean loss.
pub fn backward<T: Real>(
    params: &ModelParams<T>,
    forwards: &[Forward<T>],
    labels: &[T],
    grads: &mut ModelParams<T>,
) -> Result<f64> {
    if forwards.is_empty() || forwards.len() != labels.len() {
        return Err(Error::invalid("backward: batch is empty or labels misaligned"));
    }
    let n = T::of(forwards.len() as f64);
    let mut loss = 0.0;
    for (f, &y) in forwards.iter().zip(labels) {
        loss += f.loss(y).as_f64();
        backward_sample(params, f, (sigmoid(f.logit) - y) / n, grads)?;
    }
    Ok(loss / forwards.len() as f64)
}
