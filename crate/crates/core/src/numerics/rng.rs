//! Seeded randomness.
//!
//! Every run owns one [`RngStreams`]: independent ChaCha8 streams keyed by
//! the run seed and a fixed stream id per purpose. Turning a mechanism off
//! therefore never shifts the draws another mechanism sees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Real;

/// What a stream is used for. The discriminant is the ChaCha stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Init = 1,
    Dropout = 2,
    Reservoir = 3,
    Shuffle = 4,
    Data = 5,
}

pub type Rng64 = ChaCha8Rng;

/// A ChaCha8 generator positioned on the stream for `purpose`.
pub fn stream(seed: u64, purpose: Purpose) -> Rng64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngStreams {
    pub seed: u64,
    pub init: Rng64,
    pub dropout: Rng64,
    pub reservoir: Rng64,
    pub shuffle: Rng64,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            init: stream(seed, Purpose::Init),
            dropout: stream(seed, Purpose::Dropout),
            reservoir: stream(seed, Purpose::Reservoir),
            shuffle: stream(seed, Purpose::Shuffle),
        }
    }
}

/// One draw from `N(mean, std²)`.
pub fn normal<R: Rng + ?Sized>(rng: &mut R, mean: Real, std: Real) -> Real {
    let n = Normal::new(mean as f64, std as f64).expect("finite, non-negative std");
    n.sample(rng) as Real
}

/// Uniform draw in `[lo, hi)`.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: Real, hi: Real) -> Real {
    lo + (hi - lo) * rng.random::<f64>() as Real
}

/// Fisher-Yates shuffle of `0..n`.
pub fn permutation<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        p.swap(i, j);
    }
    p
}
