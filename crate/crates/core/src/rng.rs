//! Seeded, stream-indexed random numbers.
//!
//! Every consumer of randomness takes a [`SeededRng`] explicitly. A generator
//! is identified by `(seed, stream)`; sub-streams for per-trajectory or
//! per-cell work are derived with [`SeededRng::fork`], so results never
//! depend on evaluation order.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha12Rng,
    seed: u64,
    stream: u64,
    draws: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha12Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            inner,
            seed,
            stream,
            draws: 0,
        }
    }

    /// Independent generator for sub-stream `index` of this generator's stream.
    ///
    /// Forking does not consume draws from `self`.
    pub fn fork(&self, index: u64) -> Self {
        let stream = self
            .stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(index.wrapping_add(1));
        Self::with_stream(self.seed ^ 0xD1B5_4A32_D192_ED03, stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of uniform variates drawn so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Uniform variate in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.draws += 1;
        self.inner.random::<f64>()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        self.draws += 1;
        self.inner.random_range(0..n)
    }

    /// Standard normal variate (Box-Muller).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Index drawn from the categorical distribution with cumulative
    /// probabilities `cdf` (last entry is the total mass).
    pub fn categorical_cdf(&mut self, cdf: &[f64]) -> usize {
        let total = *cdf.last().expect("empty distribution");
        let u = self.uniform() * total;
        cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.draws += 1;
        self.inner.next_u64()
    }
}
