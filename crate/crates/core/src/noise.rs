//! Reproducible Wiener increments.
//!
//! Every trajectory draws from its own ChaCha stream selected by
//! `(master_seed, trajectory)`. ChaCha is counter-based, so a trajectory's
//! increments do not depend on which worker runs it or in which order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Stream offset used for initial-condition sampling, kept disjoint from the
/// noise streams so that sampling initial data never shifts the increments.
const INITIAL_CONDITION_STREAM: u64 = 1 << 62;

/// Per-trajectory source of standard normal variates.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(master_seed: u64, trajectory: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(trajectory);
        Self { rng }
    }

    /// Stream for sampling the initial condition of `trajectory`.
    pub fn initial_conditions(master_seed: u64, trajectory: u64) -> Self {
        Self::new(master_seed, INITIAL_CONDITION_STREAM + trajectory)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// dB ~ N(0, dt).
    pub fn increment(&mut self, dt: f64) -> f64 {
        dt.sqrt() * self.standard_normal()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

/// A realized sequence of Wiener increments for step size `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub seed: u64,
    pub trajectory: u64,
    pub dt: f64,
    pub increments: Vec<f64>,
}

impl NoisePath {
    pub fn generate(seed: u64, trajectory: u64, dt: f64, steps: usize) -> Self {
        let mut stream = NoiseStream::new(seed, trajectory);
        let increments = (0..steps).map(|_| stream.increment(dt)).collect();
        Self { seed, trajectory, dt, increments }
    }

    /// A path with every increment zero.
    pub fn silent(dt: f64, steps: usize) -> Self {
        Self { seed: 0, trajectory: 0, dt, increments: vec![0.0; steps] }
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    /// B at the end of the path.
    pub fn endpoint(&self) -> f64 {
        self.increments.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = NoisePath::generate(7, 3, 0.01, 64);
        let b = NoisePath::generate(7, 3, 0.01, 64);
        let c = NoisePath::generate(7, 4, 0.01, 64);
        let d = NoisePath::generate(8, 3, 0.01, 64);
        assert_eq!(a, b);
        assert_ne!(a.increments, c.increments);
        assert_ne!(a.increments, d.increments);
        let ic = NoiseStream::initial_conditions(7, 3).standard_normal();
        assert_ne!(ic, NoiseStream::new(7, 3).standard_normal());
    }

    #[test]
    fn increment_moments_within_five_sigma() {
        let dt = 0.02;
        let n = 200_000usize;
        let mut s = NoiseStream::new(99, 0);
        let draws: Vec<f64> = (0..n).map(|_| s.increment(dt)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let second = draws.iter().map(|d| d * d).sum::<f64>() / n as f64;
        // sd(dB) = √dt, sd(dB²) = √2 dt
        assert!(mean.abs() < 5.0 * (dt / n as f64).sqrt(), "mean {mean}");
        assert!((second - dt).abs() < 5.0 * 2f64.sqrt() * dt / (n as f64).sqrt(), "second {second}");
    }
}
