//! From-scratch numerics for the student model: embedding lookup, spatial
//! dropout, bidirectional LSTM with variational recurrent dropout, a sigmoid
//! dense head, BCE from logits, full backpropagation through time, and Adam.
//!
//! Everything is generic over [`Real`] so gradient checks can run in `f64`
//! while training runs in `f32`.

mod adam;
mod layers;
mod lstm;
mod model;
mod params;

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use layers::{bce_loss, embed, head_forward, sigmoid, softplus, spatial_dropout};
pub use lstm::{lstm_step, lstm_step_backward, LstmParams, StepCache};
pub use model::{
    backward, backward_sample, bilstm_forward, forward, predict, DirectionCache, DropoutConfig, Forward, SampleCache,
};
pub use params::{ModelDims, ModelParams, BLOCK_NAMES};

pub trait Real: Float + NumAssign + FromPrimitive + Sum + Debug + Default + Send + Sync + 'static {
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("representable constant")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite real")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `acc[j] += scale * row[j]`.
#[inline]
pub(crate) fn axpy<T: Real>(acc: &mut [T], scale: T, row: &[T]) {
    for (a, &r) in acc.iter_mut().zip(row) {
        *a += scale * r;
    }
}

/// Dot product with eight independent partial sums, combined in a fixed
/// order so results are reproducible.
#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let mut p = [T::zero(); 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for k in 0..8 {
            p[k] += x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for k in chunks * 8..n {
        tail += a[k] * b[k];
    }
    ((p[0] + p[1]) + (p[2] + p[3])) + ((p[4] + p[5]) + (p[6] + p[7])) + tail
}
