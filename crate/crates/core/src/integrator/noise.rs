//! Counter-addressable Wiener increments.
//!
//! The increment ΔW^ρ_n is a pure function of (seed, ρ, n): a ChaCha8 stream
//! seeded from `seed`, with stream id ρ and word position 4n, yields two u64
//! words which Box–Muller maps to one standard normal, then scaled by √dt.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One N(0, 1) draw keyed by (seed, channel, step).
pub fn standard_normal(seed: u64, channel: u64, step: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(channel);
    rng.set_word_pos(4 * step as u128);
    let a = rng.next_u64();
    let b = rng.next_u64();
    // u1 in (0, 1], u2 in [0, 1)
    let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of Monte Carlo sample `index`: splitmix64(base ⊕ splitmix64(index)).
pub fn sample_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index))
}

/// Increments ΔW^ρ_n ~ N(0, dt) for n < steps and ρ < channels, materialised up front.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    seed: u64,
    steps: usize,
    dt: f64,
    channels: usize,
    /// Row-major in (n, ρ).
    increments: Vec<f64>,
}

impl NoisePath {
    pub fn generate(seed: u64, steps: usize, dt: f64, channels: usize) -> NoisePath {
        assert!(
            steps >= 1 && dt > 0.0,
            "noise path needs steps >= 1 and dt > 0"
        );
        let scale = dt.sqrt();
        let mut increments = Vec::with_capacity(steps * channels);
        for n in 0..steps {
            for r in 0..channels {
                increments.push(scale * standard_normal(seed, r as u64, n as u64));
            }
        }
        NoisePath {
            seed,
            steps,
            dt,
            channels,
            increments,
        }
    }

    /// A path with no channels, for deterministic problems.
    pub fn silent(steps: usize, dt: f64) -> NoisePath {
        NoisePath::generate(0, steps, dt, 0)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// All channel increments of step n.
    pub fn step(&self, n: usize) -> &[f64] {
        &self.increments[n * self.channels..(n + 1) * self.channels]
    }

    pub fn increment(&self, channel: usize, n: usize) -> f64 {
        self.step(n)[channel]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn addressable_and_reproducible() {
        let p = NoisePath::generate(7, 50, 0.01, 2);
        let q = NoisePath::generate(7, 50, 0.01, 2);
        assert_eq!(p, q);
        assert_eq!(p.increment(1, 33), 0.1 * standard_normal(7, 1, 33));
        let other = NoisePath::generate(8, 50, 0.01, 2);
        assert_ne!(p.increment(0, 0), other.increment(0, 0));
        assert_ne!(p.increment(0, 5), p.increment(1, 5));
        // a longer path starts with the same increments
        let longer = NoisePath::generate(7, 80, 0.01, 2);
        assert_eq!(&longer.step(49), &p.step(49));
    }

    #[test]
    fn sample_seeds_differ() {
        let seeds: std::collections::BTreeSet<u64> =
            (0..1000).map(|i| sample_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_eq!(sample_seed(42, 3), sample_seed(42, 3));
    }

    #[test]
    fn moments() {
        let dt = 0.01;
        let n = 1_000_000;
        let p = NoisePath::generate(2024, n, dt, 1);
        let mean: f64 = (0..n).map(|i| p.increment(0, i)).sum::<f64>() / n as f64;
        let var: f64 = (0..n)
            .map(|i| (p.increment(0, i) - mean).powi(2))
            .sum::<f64>()
            / (n - 1) as f64;
        assert!(mean.abs() < 4.0 * (dt / n as f64).sqrt(), "mean {mean}");
        // Var of the sample variance is 2dt²/n
        assert!(
            (var - dt).abs() < 4.0 * dt * (2.0 / n as f64).sqrt(),
            "var {var}"
        );
    }
}
