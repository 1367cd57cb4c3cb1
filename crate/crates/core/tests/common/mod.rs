//! Shared helpers for the integration tests.

#![allow(dead_code)]

use num_complex::Complex64;
use proptest::test_runner::{Config, RngSeed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type C64 = Complex64;

pub const DEFAULT_SEED: u64 = 0x5eed_2024;

/// Seed for randomized inputs, overridable through `PHASEKIT_SEED`.
pub fn seed() -> u64 {
    std::env::var("PHASEKIT_SEED").ok().and_then(|s| s.trim().parse().ok()).unwrap_or(DEFAULT_SEED)
}

/// Deterministic generator for one test, derived from the global seed.
pub fn rng(salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed() ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

pub fn proptest_config(cases: u32) -> Config {
    Config { cases, rng_seed: RngSeed::Fixed(seed()), failure_persistence: None, ..Config::default() }
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn random_c(rng: &mut impl Rng, scale: f64) -> C64 {
    c(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))
}

/// Polynomial with coefficients in the variable `x ∈ [-1, 1]`.
#[derive(Clone, Debug)]
pub struct Poly(pub Vec<C64>);

impl Poly {
    pub fn random(rng: &mut impl Rng, degree: usize, scale: f64) -> Self {
        Poly((0..=degree).map(|_| random_c(rng, scale)).collect())
    }

    pub fn derivative(&self) -> Poly {
        if self.0.len() <= 1 {
            return Poly(vec![C64::default()]);
        }
        Poly(self.0.iter().enumerate().skip(1).map(|(i, &a)| a * i as f64).collect())
    }

    pub fn eval(&self, x: f64) -> C64 {
        self.0.iter().rev().fold(C64::default(), |acc, &a| acc * x + a)
    }
}

/// Maps `t ∈ [a, b]` to `x ∈ [-1, 1]`.
pub fn to_unit((a, b): (f64, f64), t: f64) -> f64 {
    (2.0 * t - a - b) / (b - a)
}

pub fn max_abs(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}
