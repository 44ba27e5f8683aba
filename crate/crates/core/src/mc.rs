//! Blocked, seed-reproducible Monte Carlo driver.
//!
//! A run of `n` draws is cut into blocks of [`BLOCK_SIZE`]; block `b` draws
//! from stream `b` of the run seed. Blocks are grouped into `chunks`
//! contiguous ranges for parallel work and their statistics merged in block
//! order, so results depend on the seed but never on the chunk count.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::sampler::RandomStream;

pub const BLOCK_SIZE: usize = 1024;

/// Sample budget, seed and worker split of one Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McSettings {
    pub n_samples: usize,
    pub seed: u64,
    pub chunks: usize,
}

impl McSettings {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        McSettings {
            n_samples,
            seed,
            chunks: rayon::current_num_threads().max(1),
        }
    }

    pub fn with_chunks(mut self, chunks: usize) -> Self {
        self.chunks = chunks.max(1);
        self
    }

    pub fn with_samples(mut self, n_samples: usize) -> Self {
        self.n_samples = n_samples;
        self
    }

    /// Same settings with a seed derived from `tag`.
    pub fn derive(self, tag: u64) -> Self {
        McSettings {
            seed: RandomStream::derive_seed(self.seed, tag),
            ..self
        }
    }
}

/// Streaming mean and variance (Welford), mergeable (Chan et al.).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Runs `block(rng, count)` for every block and returns the results in
/// block order.
pub fn run_blocks<T, F>(settings: &McSettings, block: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, usize) -> Result<T> + Sync,
{
    let n = settings.n_samples;
    let n_blocks = n.div_ceil(BLOCK_SIZE);
    let chunks = settings.chunks.clamp(1, n_blocks.max(1));
    let per = n_blocks.div_ceil(chunks).max(1);
    let run_block = |b: usize| {
        let count = BLOCK_SIZE.min(n - b * BLOCK_SIZE);
        let mut rng = RandomStream::new(settings.seed, b as u64).rng();
        block(&mut rng, count)
    };
    let groups: Vec<Result<Vec<T>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = (c * per).min(n_blocks);
            let hi = ((c + 1) * per).min(n_blocks);
            (lo..hi).map(run_block).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(n_blocks);
    for g in groups {
        out.extend(g?);
    }
    Ok(out)
}

/// Mean and standard error of `draw` over `settings.n_samples` draws.
pub fn mc_mean<F>(settings: &McSettings, draw: F) -> Result<RunningStats>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
{
    let blocks = run_blocks(settings, |rng, count| {
        let mut s = RunningStats::default();
        for _ in 0..count {
            s.push(draw(rng)?);
        }
        Ok(s)
    })?;
    let mut total = RunningStats::default();
    for b in &blocks {
        total.merge(b);
    }
    Ok(total)
}

/// Per-component statistics of a vector-valued draw of fixed length.
pub fn mc_mean_vec<F>(settings: &McSettings, len: usize, draw: F) -> Result<Vec<RunningStats>>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) -> Result<()> + Sync,
{
    let blocks = run_blocks(settings, |rng, count| {
        let mut stats = vec![RunningStats::default(); len];
        let mut buf = vec![0.0; len];
        for _ in 0..count {
            buf.iter_mut().for_each(|x| *x = 0.0);
            draw(rng, &mut buf)?;
            for (s, x) in stats.iter_mut().zip(&buf) {
                s.push(*x);
            }
        }
        Ok(stats)
    })?;
    let mut total = vec![RunningStats::default(); len];
    for b in &blocks {
        for (t, s) in total.iter_mut().zip(b) {
            t.merge(s);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let mut all = RunningStats::default();
        xs.iter().for_each(|x| all.push(*x));
        let mut a = RunningStats::default();
        let mut b = RunningStats::default();
        xs[..333].iter().for_each(|x| a.push(*x));
        xs[333..].iter().for_each(|x| b.push(*x));
        a.merge(&b);
        assert_eq!(a.count(), 1000);
        assert!((a.mean() - all.mean()).abs() < 1e-12);
        assert!((a.variance() - all.variance()).abs() < 1e-10);
    }

    #[test]
    fn chunk_count_is_irrelevant() {
        let base = McSettings::new(10_000, 5);
        let draw = |rng: &mut ChaCha8Rng| Ok(rng.random::<f64>());
        let one = mc_mean(&base.with_chunks(1), draw).unwrap();
        for c in [2, 3, 8, 100] {
            assert_eq!(mc_mean(&base.with_chunks(c), draw).unwrap(), one);
        }
    }

    #[test]
    fn partial_last_block() {
        let s = mc_mean(&McSettings::new(1500, 1), |_| Ok(2.0)).unwrap();
        assert_eq!(s.count(), 1500);
        assert_eq!(s.mean(), 2.0);
        assert_eq!(s.std_error(), 0.0);
        let empty = mc_mean(&McSettings::new(0, 1), |_| Ok(2.0)).unwrap();
        assert_eq!(empty.count(), 0);
    }
}
