//! Caller-owned standard-normal streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub trait NoiseSource {
    fn standard_normal(&mut self, count: usize) -> Vec<f64>;
}

/// Seeded Gaussian stream. Cloning forks an identical continuation, which is
/// how repeated evaluations see the same draws.
#[derive(Clone, Debug)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        NoiseStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl NoiseSource for NoiseStream {
    fn standard_normal(&mut self, count: usize) -> Vec<f64> {
        (0..count).map(|_| StandardNormal.sample(&mut self.rng)).collect()
    }
}

/// All-zero "noise"; makes stochastic paths deterministic in tests.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn standard_normal(&mut self, count: usize) -> Vec<f64> {
        vec![0.0; count]
    }
}
