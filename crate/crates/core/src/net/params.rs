use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::lstm::LstmParams;
use super::Real;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_units: usize,
    pub max_len: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            vocab_size: 22_000,
            embed_dim: 100,
            hidden_units: 256,
            max_len: crate::corpus::DEFAULT_MAX_LEN,
        }
    }
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 1 || self.embed_dim < 1 || self.hidden_units < 1 || self.max_len < 1 {
            return Err(Error::invalid(format!("model dimensions must all be >= 1: {self:?}")));
        }
        Ok(())
    }

    pub fn feature_width(&self) -> usize {
        2 * self.hidden_units
    }
}

/// Fixed block order shared by gradients, optimizer moments, and the
/// checkpoint layout.
pub const BLOCK_NAMES: [&str; 9] = [
    "embedding", "fwd.w", "fwd.u", "fwd.b", "bwd.w", "bwd.u", "bwd.b", "dense.w", "dense.b",
];

/// All trainable arrays. Gradients and Adam moments reuse this type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub dims: ModelDims,
    /// `vocab_size x embed_dim`, row-major.
    pub embedding: Vec<T>,
    pub fwd: LstmParams<T>,
    pub bwd: LstmParams<T>,
    /// `2 * hidden_units`, forward half first.
    pub dense_w: Vec<T>,
    /// Length one.
    pub dense_b: Vec<T>,
}

impl<T: Real> ModelParams<T> {
    pub fn zeros(dims: ModelDims) -> Self {
        ModelParams {
            dims,
            embedding: vec![T::zero(); dims.vocab_size * dims.embed_dim],
            fwd: LstmParams::zeros(dims.embed_dim, dims.hidden_units),
            bwd: LstmParams::zeros(dims.embed_dim, dims.hidden_units),
            dense_w: vec![T::zero(); dims.feature_width()],
            dense_b: vec![T::zero()],
        }
    }

    /// Glorot-uniform input and dense weights, orthogonal recurrent weights,
    /// zero biases except forget-gate bias 1, embedding uniform in ±0.05.
    pub fn init(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(dims);
        for x in &mut p.embedding {
            *x = T::of(rng.random_range(-0.05..0.05));
        }
        for dir in [&mut p.fwd, &mut p.bwd] {
            let h = dims.hidden_units;
            glorot(&mut dir.w, dims.embed_dim, 4 * h, &mut rng);
            orthogonal_rows(&mut dir.u, h, 4 * h, &mut rng);
            for b in &mut dir.b[h..2 * h] {
                *b = T::one();
            }
        }
        glorot(&mut p.dense_w, dims.feature_width(), 1, &mut rng);
        Ok(p)
    }

    pub fn blocks(&self) -> [&[T]; 9] {
        [
            &self.embedding,
            &self.fwd.w,
            &self.fwd.u,
            &self.fwd.b,
            &self.bwd.w,
            &self.bwd.u,
            &self.bwd.b,
            &self.dense_w,
            &self.dense_b,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<T>; 9] {
        [
            &mut self.embedding,
            &mut self.fwd.w,
            &mut self.fwd.u,
            &mut self.fwd.b,
            &mut self.bwd.w,
            &mut self.bwd.u,
            &mut self.bwd.b,
            &mut self.dense_w,
            &mut self.dense_b,
        ]
    }

    pub fn fill_zero(&mut self) {
        for b in self.blocks_mut() {
            b.iter_mut().for_each(|x| *x = T::zero());
        }
    }

    pub fn scale(&mut self, s: T) {
        for b in self.blocks_mut() {
            b.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    pub fn sum_squares(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.iter())
            .map(|x| x.as_f64() * x.as_f64())
            .sum()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let c = |v: &Vec<T>| v.iter().map(|x| U::of(x.as_f64())).collect::<Vec<U>>();
        ModelParams {
            dims: self.dims,
            embedding: c(&self.embedding),
            fwd: LstmParams {
                input_dim: self.fwd.input_dim,
                hidden: self.fwd.hidden,
                w: c(&self.fwd.w),
                u: c(&self.fwd.u),
                b: c(&self.fwd.b),
            },
            bwd: LstmParams {
                input_dim: self.bwd.input_dim,
                hidden: self.bwd.hidden,
                w: c(&self.bwd.w),
                u: c(&self.bwd.u),
                b: c(&self.bwd.b),
            },
            dense_w: c(&self.dense_w),
            dense_b: c(&self.dense_b),
        }
    }

    /// Rebuild from blocks in [`BLOCK_NAMES`] order, checking lengths.
    pub fn from_blocks(dims: ModelDims, blocks: Vec<Vec<T>>) -> Result<Self> {
        let mut p = Self::zeros(dims);
        if blocks.len() != BLOCK_NAMES.len() {
            return Err(Error::invalid(format!("expected {} parameter blocks, got {}", BLOCK_NAMES.len(), blocks.len())));
        }
        for ((slot, block), name) in p.blocks_mut().into_iter().zip(blocks).zip(BLOCK_NAMES) {
            if slot.len() != block.len() {
                return Err(Error::invalid(format!("block {name}: expected {} values, got {}", slot.len(), block.len())));
            }
            *slot = block;
        }
        Ok(p)
    }
}

fn glorot<T: Real>(out: &mut [T], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for x in out {
        *x = T::of(rng.random_range(-limit..limit));
    }
}

/// Fill a `rows x cols` (rows <= cols) matrix with orthonormal rows via
/// modified Gram-Schmidt on Gaussian draws.
fn orthogonal_rows<T: Real>(out: &mut [T], rows: usize, cols: usize, rng: &mut ChaCha8Rng) {
    debug_assert!(rows <= cols);
    let mut m: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    for i in 0..rows {
        for j in 0..i {
            let d: f64 = (0..cols).map(|k| m[i * cols + k] * m[j * cols + k]).sum();
            for k in 0..cols {
                m[i * cols + k] -= d * m[j * cols + k];
            }
        }
        let norm = (0..cols).map(|k| m[i * cols + k].powi(2)).sum::<f64>().sqrt();
        for k in 0..cols {
            m[i * cols + k] /= norm;
        }
    }
    for (o, v) in out.iter_mut().zip(m) {
        *o = T::of(v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> ModelDims {
        ModelDims {
            vocab_size: 11,
            embed_dim: 5,
            hidden_units: 6,
            max_len: 8,
        }
    }

    #[test]
    fn published_defaults() {
        let d = ModelDims::default();
        assert_eq!((d.vocab_size, d.embed_dim, d.hidden_units), (22_000, 100, 256));
        assert_eq!(d.feature_width(), 512);
    }

    #[test]
    fn init_shapes_and_biases() {
        let p = ModelParams::<f64>::init(dims(), 3).unwrap();
        let h = 6;
        assert_eq!(p.embedding.len(), 55);
        assert_eq!(p.fwd.w.len(), 5 * 4 * h);
        assert_eq!(p.fwd.u.len(), h * 4 * h);
        assert!(p.fwd.b[..h].iter().all(|&b| b == 0.0));
        assert!(p.fwd.b[h..2 * h].iter().all(|&b| b == 1.0));
        assert!(p.bwd.b[2 * h..].iter().all(|&b| b == 0.0));
        assert!(p.embedding.iter().all(|x| x.abs() <= 0.05));
        let limit = (6.0f64 / (5 + 4 * h) as f64).sqrt();
        assert!(p.fwd.w.iter().all(|x| x.abs() <= limit));
        assert_eq!(p.dense_b, [0.0]);
        assert_ne!(p.fwd.u, p.bwd.u);
    }

    #[test]
    fn recurrent_rows_are_orthonormal() {
        let p = ModelParams::<f64>::init(dims(), 9).unwrap();
        let (h, cols) = (6, 24);
        for i in 0..h {
            for j in 0..h {
                let d: f64 = (0..cols).map(|k| p.fwd.u[i * cols + k] * p.fwd.u[j * cols + k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn init_is_seeded() {
        assert_eq!(ModelParams::<f32>::init(dims(), 1).unwrap(), ModelParams::<f32>::init(dims(), 1).unwrap());
        assert_ne!(ModelParams::<f32>::init(dims(), 1).unwrap(), ModelParams::<f32>::init(dims(), 2).unwrap());
    }

    #[test]
    fn blocks_round_trip() {
        let p = ModelParams::<f32>::init(dims(), 1).unwrap();
        let blocks: Vec<Vec<f32>> = p.blocks().iter().map(|b| b.to_vec()).collect();
        assert_eq!(ModelParams::from_blocks(dims(), blocks).unwrap(), p);
        assert!(ModelParams::<f32>::from_blocks(dims(), vec![vec![0.0]]).is_err());
    }
}
