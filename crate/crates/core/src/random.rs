//! Seeded random number helpers. Every stochastic routine in the crate draws
//! from a ChaCha stream so results are reproducible across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha20Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn standard_normal_vec<R: rand::Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Uniform draws from `[lo, hi)`.
pub fn uniform_vec<R: rand::Rng + ?Sized>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}
