#![allow(dead_code)]

use conelab::{FiniteConfiguration, MarkedPoint};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` marked points in `d` dimensions with distinct positions.
pub fn random_config(seed: u64, n: usize, d: usize) -> FiniteConfiguration {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|i| {
            // first coordinate separates the points
            let x: Vec<f64> = (0..d)
                .map(|j| if j == 0 { i as f64 + rng.random::<f64>() * 0.9 } else { rng.random() })
                .collect();
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let v = if v.iter().all(|c| *c == 0.0) { vec![1.0; d] } else { v };
            MarkedPoint::new(v, x).unwrap()
        })
        .collect();
    FiniteConfiguration::new(points).unwrap()
}

pub fn config_strategy(max_n: usize, d: usize) -> impl Strategy<Value = FiniteConfiguration> {
    (any::<u64>(), 0..=max_n).prop_map(move |(seed, n)| random_config(seed, n, d))
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// `∫_a^b g(r) dr` by Simpson in `t = ln r` (resolves the `r → 0` end).
pub fn simpson_log<F: Fn(f64) -> f64>(g: F, a: f64, b: f64, n: usize) -> f64 {
    simpson(|t| {
        let r = t.exp();
        g(r) * r
    }, a.ln(), b.ln(), n)
}
