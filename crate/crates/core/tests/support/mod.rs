//! Independent oracles shared by the core integration tests and the
//! acceptance suite (included by path there).
#![allow(dead_code)]

pub mod experiment;

use radlabel::net::{self, DropoutConfig, ModelDims, ModelParams, BLOCK_NAMES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_block: &'static str,
    pub checked: usize,
}

/// One toy problem: random params, 1-3 random sentences of length 1-5,
/// random labels, dropout active with a fixed mask seed.
pub struct ToyProblem {
    pub params: ModelParams<f64>,
    pub samples: Vec<(Vec<u32>, f64)>,
    pub dropout: DropoutConfig,
    pub mask_seed: u64,
}

pub fn toy_dims() -> ModelDims {
    ModelDims {
        vocab_size: 7,
        embed_dim: 3,
        hidden_units: 4,
        max_len: 5,
    }
}

impl ToyProblem {
    pub fn new(seed: u64) -> Self {
        let dims = toy_dims();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
        let mut params = ModelParams::<f64>::init(dims, seed).unwrap();
        // Larger weights than the initializer so every gate is exercised.
        for b in params.blocks_mut() {
            for x in b.iter_mut() {
                *x += rng.random_range(-0.5..0.5);
            }
        }
        let n = rng.random_range(1..=3);
        let samples = (0..n)
            .map(|_| {
                let len = rng.random_range(1..=dims.max_len);
                let idx = (0..len).map(|_| rng.random_range(0..dims.vocab_size as u32)).collect();
                (idx, rng.random_range(0..=1) as f64)
            })
            .collect();
        ToyProblem {
            params,
            samples,
            dropout: DropoutConfig {
                spatial_rate: 0.25,
                recurrent_rate: 0.3,
                seed: 0,
            },
            mask_seed: seed,
        }
    }

    pub fn loss(&self, params: &ModelParams<f64>) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.mask_seed);
        let total: f64 = self
            .samples
            .iter()
            .map(|(idx, y)| net::forward(params, idx, &self.dropout, &mut rng, true).unwrap().loss(*y))
            .sum();
        total / self.samples.len() as f64
    }

    pub fn analytic(&self) -> ModelParams<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.mask_seed);
        let fwds: Vec<_> = self
            .samples
            .iter()
            .map(|(idx, _)| net::forward(&self.params, idx, &self.dropout, &mut rng, true).unwrap())
            .collect();
        let labels: Vec<f64> = self.samples.iter().map(|s| s.1).collect();
        let mut g = ModelParams::zeros(self.params.dims);
        net::backward(&self.params, &fwds, &labels, &mut g).unwrap();
        g
    }

    /// Central differences over every element of every block.
    pub fn check(&self, eps: f64) -> GradCheck {
        let analytic = self.analytic();
        let mut out = GradCheck {
            max_rel_error: 0.0,
            worst_block: "",
            checked: 0,
        };
        for (b, name) in BLOCK_NAMES.iter().enumerate() {
            let len = self.params.blocks()[b].len();
            for i in 0..len {
                let mut plus = self.params.clone();
                plus.blocks_mut()[b][i] += eps;
                let mut minus = self.params.clone();
                minus.blocks_mut()[b][i] -= eps;
                let numeric = (self.loss(&plus) - self.loss(&minus)) / (2.0 * eps);
                let a = analytic.blocks()[b][i];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                if rel > out.max_rel_error {
                    out.max_rel_error = rel;
                    out.worst_block = name;
                }
                out.checked += 1;
            }
        }
        out
    }
}

/// `P(score_pos > score_neg) + 0.5 P(tie)` by enumerating all pairs.
pub fn mann_whitney_auc(pairs: &[(f64, u8)]) -> f64 {
    let pos: Vec<f64> = pairs.iter().filter(|p| p.1 == 1).map(|p| p.0).collect();
    let neg: Vec<f64> = pairs.iter().filter(|p| p.1 == 0).map(|p| p.0).collect();
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

/// Scalar Adam written out longhand.
pub fn adam_reference(theta0: f64, grads: &[f64], lr: f64, b1: f64, b2: f64, eps: f64) -> Vec<f64> {
    let (mut theta, mut m, mut v) = (theta0, 0.0, 0.0);
    grads
        .iter()
        .enumerate()
        .map(|(k, &g)| {
            let t = (k + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            theta -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
            theta
        })
        .collect()
}
