//! Poisson configurations on a compact phase window and Lebesgue-Poisson
//! series expectations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinat::ConfigurationFunction;
use crate::config::{FiniteConfiguration, MarkedPoint};
use crate::error::{Error, Result};
use crate::intensity::{IntensitySpec, VelocitySampler};
use crate::mc::{mc_mean, McSettings, BLOCK_SIZE};
use crate::oracle::splitmix;

/// Reproducible random stream: `(seed, stream_index)` fixes every draw;
/// different indices give independent ChaCha streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomStream {
    pub seed: u64,
    pub stream_index: u64,
}

impl RandomStream {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        RandomStream { seed, stream_index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_index);
        rng
    }

    /// Seed for an independent sub-run labelled `tag`.
    pub fn derive_seed(seed: u64, tag: u64) -> u64 {
        splitmix(splitmix(seed) ^ splitmix(tag.wrapping_add(0x1234_5678)))
    }
}

/// Means above this are drawn as sums of independent pieces so the
/// sequential inversion never underflows `e^{-mean}`.
const INVERSION_MAX_MEAN: f64 = 30.0;

/// Poisson count by sequential-search inversion.
pub fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let mut remaining = mean;
    let mut total = 0;
    while remaining > 0.0 {
        let m = remaining.min(INVERSION_MAX_MEAN);
        remaining -= m;
        let u: f64 = rng.random();
        let mut k = 0usize;
        let mut p = (-m).exp();
        let mut cdf = p;
        while u > cdf {
            k += 1;
            p *= m / k as f64;
            cdf += p;
            if p == 0.0 && k as f64 > m {
                break;
            }
        }
        total += k;
    }
    total
}

/// Sampler for `π_σ` restricted to the window of `σ`.
#[derive(Debug, Clone)]
pub struct PoissonSampler {
    sigma: IntensitySpec,
    mass: f64,
    velocities: VelocitySampler,
}

impl PoissonSampler {
    pub fn new(sigma: &IntensitySpec) -> Result<Self> {
        Ok(PoissonSampler {
            sigma: sigma.clone(),
            mass: sigma.sigma_mass()?,
            velocities: VelocitySampler::new(&sigma.law, &sigma.marks),
        })
    }

    pub fn sigma(&self) -> &IntensitySpec {
        &self.sigma
    }

    /// `σ(I × Λ)`.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// One `σ`-distributed point (normalized), avoiding `taken` positions.
    fn point<R: Rng + ?Sized>(&self, rng: &mut R, taken: &[MarkedPoint]) -> MarkedPoint {
        let w = &self.sigma.window;
        loop {
            let x: Vec<f64> = w
                .lower()
                .iter()
                .zip(w.upper())
                .map(|(l, u)| l + (u - l) * rng.random::<f64>())
                .collect();
            // a draw can round up onto the open upper face
            if !w.contains(&x) || taken.iter().any(|p| p.position() == x.as_slice()) {
                continue;
            }
            let v = self.velocities.sample(rng);
            return MarkedPoint::new(v, x).expect("sampled velocity is nonzero");
        }
    }

    /// `n` i.i.d. points from the normalized intensity, pinpointed.
    pub fn sample_iid<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> FiniteConfiguration {
        if n > 0 && self.sigma.window.volume() == 0.0 {
            return FiniteConfiguration::empty();
        }
        let mut points = Vec::with_capacity(n);
        for _ in 0..n {
            let p = self.point(rng, &points);
            points.push(p);
        }
        FiniteConfiguration::new(points).expect("positions are distinct")
    }

    /// One configuration from `π_σ`: `N ~ Poisson(σ(I × Λ))` i.i.d. points.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FiniteConfiguration {
        let n = poisson_count(self.mass, rng);
        self.sample_iid(n, rng)
    }
}

/// One configuration from `π_σ` drawn from `stream`. Builds a fresh
/// [`PoissonSampler`]; reuse one sampler for many draws.
pub fn sample_poisson(sigma: &IntensitySpec, stream: &RandomStream) -> Result<FiniteConfiguration> {
    let sampler = PoissonSampler::new(sigma)?;
    Ok(sampler.sample(&mut stream.rng()))
}

/// A reproducible batch of Poisson configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub configs: Vec<FiniteConfiguration>,
    pub sigma: IntensitySpec,
    pub seed: u64,
    pub n: usize,
}

impl SampleBatch {
    /// Configuration `i` is drawn from stream `(seed, i)`, so the batch is
    /// identical for every `chunks`.
    pub fn generate(sigma: &IntensitySpec, n: usize, seed: u64, chunks: usize) -> Result<Self> {
        let sampler = PoissonSampler::new(sigma)?;
        let chunks = chunks.clamp(1, n.max(1));
        let per = n.div_ceil(chunks).max(1);
        let groups: Vec<Vec<FiniteConfiguration>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let lo = (c * per).min(n);
                let hi = ((c + 1) * per).min(n);
                (lo..hi)
                    .map(|i| sampler.sample(&mut RandomStream::new(seed, i as u64).rng()))
                    .collect()
            })
            .collect();
        Ok(SampleBatch {
            configs: groups.into_iter().flatten().collect(),
            sigma: sigma.clone(),
            seed,
            n,
        })
    }

    pub fn total_points(&self) -> usize {
        self.configs.iter().map(|c| c.len()).sum()
    }

    /// CSV with a `config_id` column followed by `x_1..x_d,v_1..v_d`.
    pub fn to_csv(&self) -> String {
        let d = self.sigma.d();
        let mut out = format!("config_id,{}\n", crate::config::csv_header(d));
        for (i, c) in self.configs.iter().enumerate() {
            for p in c.iter() {
                out.push_str(&format!("{i},"));
                crate::config::write_point_row(&mut out, p);
            }
        }
        out
    }
}

/// One order of the Lebesgue-Poisson series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesTerm {
    pub order: usize,
    /// `σ(I×Λ)^n / n!`.
    pub weight: f64,
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSeriesResult {
    pub estimate: f64,
    pub std_error: f64,
    /// Bound on the omitted orders `n > n_max`; infinite when `G` carries no
    /// growth bound.
    pub truncation_bound: f64,
    pub terms: Vec<SeriesTerm>,
}

/// `c Σ_{n>n_max} (r m)^n / n!`.
pub fn truncation_bound(c: f64, r: f64, mass: f64, n_max: usize) -> f64 {
    let x = r * mass;
    if x == 0.0 {
        return 0.0;
    }
    let mut term: f64 = (1..=n_max + 1).map(|k| x / k as f64).product();
    let mut sum = 0.0;
    let mut k = n_max + 1;
    while term > 0.0 && term > 1e-18 * sum {
        sum += term;
        k += 1;
        term *= x / k as f64;
    }
    c * sum
}

/// `∫ G d𝓛_σ ≈ Σ_{n=0}^{n_max} (m^n/n!) E[G(n i.i.d. σ-points)]`. Order
/// `n ≥ 1` gets `n_samples · min(1, m^n/n!)` draws, but at least one block.
///
/// Fails with [`Error::TruncationTooLoose`] when `tolerance` is given and the
/// tail bound exceeds it.
pub fn lp_series_expectation(
    g: &ConfigurationFunction,
    sigma: &IntensitySpec,
    n_max: usize,
    settings: &McSettings,
    tolerance: Option<f64>,
) -> Result<LpSeriesResult> {
    let sampler = PoissonSampler::new(sigma)?;
    let mass = sampler.mass();
    let bound = match g.growth() {
        Some(gb) => truncation_bound(gb.c, gb.r, mass, n_max),
        None if mass == 0.0 => 0.0,
        None => f64::INFINITY,
    };
    if let Some(tol) = tolerance {
        if bound > tol {
            return Err(Error::TruncationTooLoose {
                bound,
                tolerance: tol,
            });
        }
    }
    let mut terms = vec![SeriesTerm {
        order: 0,
        weight: 1.0,
        mean: g.evaluate(&FiniteConfiguration::empty()),
        std_error: 0.0,
    }];
    let mut weight = 1.0;
    for n in 1..=n_max {
        weight *= mass / n as f64;
        if weight == 0.0 {
            break;
        }
        // orders with small weight contribute little error; give them
        // proportionally fewer draws (at least one block)
        let share = (settings.n_samples as f64 * weight.min(1.0)).ceil() as usize;
        let order_settings = settings
            .derive(n as u64)
            .with_samples(share.clamp(BLOCK_SIZE.min(settings.n_samples), settings.n_samples));
        let stats = mc_mean(&order_settings, |rng| Ok(g.evaluate(&sampler.sample_iid(n, rng))))?;
        terms.push(SeriesTerm {
            order: n,
            weight,
            mean: stats.mean(),
            std_error: stats.std_error(),
        });
    }
    let estimate = crate::sum::ksum(terms.iter().map(|t| t.weight * t.mean));
    let std_error = terms
        .iter()
        .map(|t| (t.weight * t.std_error).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(LpSeriesResult {
        estimate,
        std_error,
        truncation_bound: bound,
        terms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{MarkAnnulus, PositionWindow};
    use crate::intensity::VelocityLaw;

    fn sigma(lo: f64, hi: f64) -> IntensitySpec {
        IntensitySpec::new(
            VelocityLaw::maxwell(1),
            MarkAnnulus::new(0.5, 2.0).unwrap(),
            PositionWindow::new(vec![lo], vec![hi]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = RandomStream::new(1, 0).rng().random();
        let b: u64 = RandomStream::new(1, 0).rng().random();
        let c: u64 = RandomStream::new(1, 1).rng().random();
        let d: u64 = RandomStream::new(2, 0).rng().random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn zero_volume_window_is_always_empty() {
        let s = sigma(0.4, 0.4);
        for i in 0..100 {
            assert!(sample_poisson(&s, &RandomStream::new(3, i)).unwrap().is_empty());
        }
    }

    #[test]
    fn draws_are_inside_the_window() {
        let s = sigma(0.0, 1.0);
        let batch = SampleBatch::generate(&s, 500, 4, 3).unwrap();
        for c in &batch.configs {
            for p in c.iter() {
                assert!(s.window.contains(p.position()));
                assert!(s.marks.contains(p.velocity()));
            }
        }
    }

    #[test]
    fn batch_is_chunk_independent() {
        let s = sigma(0.0, 3.0);
        let a = SampleBatch::generate(&s, 257, 9, 1).unwrap();
        let b = SampleBatch::generate(&s, 257, 9, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn poisson_count_small_and_large_means() {
        let mut rng = RandomStream::new(0, 0).rng();
        assert_eq!(poisson_count(0.0, &mut rng), 0);
        let n = 20_000;
        for mean in [0.3, 75.0] {
            let xs: Vec<f64> = (0..n).map(|_| poisson_count(mean, &mut rng) as f64).collect();
            let m = xs.iter().sum::<f64>() / n as f64;
            assert!((m - mean).abs() < 4.0 * (mean / n as f64).sqrt(), "mean {m} vs {mean}");
        }
    }

    #[test]
    fn empty_indicator_series_is_one() {
        let r = lp_series_expectation(
            &ConfigurationFunction::empty_indicator(),
            &sigma(0.0, 1.0),
            10,
            &McSettings::new(200, 1),
            None,
        )
        .unwrap();
        assert_eq!(r.estimate, 1.0);
        assert_eq!(r.std_error, 0.0);
    }

    #[test]
    fn truncation_tolerance_is_checked() {
        let r = lp_series_expectation(
            &ConfigurationFunction::constant(1.0),
            &sigma(0.0, 1.0),
            2,
            &McSettings::new(10, 1),
            Some(1e-6),
        );
        assert!(matches!(r, Err(Error::TruncationTooLoose { .. })));
    }

    #[test]
    fn truncation_bound_matches_exponential_tail() {
        let m: f64 = 1.3;
        let head: f64 = (0..=5).map(|k| m.powi(k) / (1..=k).product::<i32>().max(1) as f64).sum();
        let tail = truncation_bound(1.0, 1.0, m, 5);
        assert!((head + tail - m.exp()).abs() < 1e-14);
    }
}
