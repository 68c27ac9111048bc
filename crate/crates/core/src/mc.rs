//! Seeded Monte Carlo plumbing.
//!
//! Trials are split into fixed-size chunks. Chunk `i` draws from the ChaCha
//! stream `i` of the master seed, chunks run in parallel and their partial
//! results are merged in chunk order, so a run is bit-reproducible for a
//! given seed regardless of thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

pub const CHUNK: usize = 1024;

/// RNG for stream `stream` of master seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Independent master seed for sub-experiment `tag` (splitmix64 mix).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Run `trials` trials in chunks of [`CHUNK`]; `f(rng, n)` handles `n` trials
/// of one chunk and returns its partial result. Results come back in chunk
/// order.
pub fn run_chunks<T, F>(trials: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, usize) -> T + Sync,
{
    let chunks = trials.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|i| {
            let n = CHUNK.min(trials - i * CHUNK);
            let mut rng = stream_rng(seed, i as u64);
            f(&mut rng, n)
        })
        .collect()
}

/// Welford accumulator, mergeable.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningStats {
    pub count: u64,
    pub mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        let n1 = self.count as f64;
        self.count += 1;
        let n = self.count as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2
            - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        let d2 = delta * delta;
        let d3 = d2 * delta;
        let d4 = d2 * d2;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3 + other.m3 + d3 * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n;
        self.mean += delta * nb / n;
        self.count += other.count;
        self.m2 = m2;
        self.m3 = m3;
        self.m4 = m4;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count as f64 - 1.0)
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }

    /// Large-sample standard error of the sample variance,
    /// `sqrt((μ₄ − σ⁴)/n)`.
    pub fn variance_std_error(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        let mu4 = self.m4 / n;
        let var = self.m2 / n;
        ((mu4 - var * var).max(0.0) / n).sqrt()
    }

    pub fn estimate(&self) -> McEstimate {
        McEstimate {
            value: self.mean,
            std_error: self.std_error(),
            trials: self.count,
        }
    }

    pub fn variance_estimate(&self) -> McEstimate {
        McEstimate {
            value: self.variance(),
            std_error: self.variance_std_error(),
            trials: self.count,
        }
    }
}

/// A Monte Carlo number with its trial count and standard error.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub trials: u64,
}

impl McEstimate {
    /// `|value − target|` in units of the standard error, with `floor`
    /// absorbing roundoff when the standard error vanishes.
    pub fn within(&self, target: f64, n_se: f64, floor: f64) -> bool {
        (self.value - target).abs() <= n_se * self.std_error + floor
    }

    pub fn z_score(&self, target: f64) -> f64 {
        if self.std_error > 0.0 {
            (self.value - target) / self.std_error
        } else if self.value == target {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Empirical quantile by nearest rank (`⌈q·n⌉`-th order statistic).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Ordinary least squares `y = a + b x`, returns `(a, b)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn merge_matches_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let mut all = RunningStats::default();
        xs.iter().for_each(|x| all.push(*x));
        let mut a = RunningStats::default();
        let mut b = RunningStats::default();
        xs[..313].iter().for_each(|x| a.push(*x));
        xs[313..].iter().for_each(|x| b.push(*x));
        a.merge(&b);
        assert!((a.mean - all.mean).abs() < 1e-12);
        assert!((a.variance() - all.variance()).abs() < 1e-9);
        assert!((a.variance_std_error() - all.variance_std_error()).abs() < 1e-9);
    }

    #[test]
    fn chunks_are_deterministic() {
        let run = || {
            run_chunks(5000, 9, |rng, n| (0..n).map(|_| rng.random::<f64>()).sum::<f64>())
        };
        assert_eq!(run(), run());
        assert_eq!(run().len(), 5);
    }

    #[test]
    fn quantile_nearest_rank() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(quantile(&xs, 0.99), 99.0);
        assert_eq!(quantile(&xs, 1.0), 100.0);
        assert_eq!(quantile(&xs, 0.0), 1.0);
    }

    #[test]
    fn fit_recovers_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let (a, b) = linear_fit(&xs, &ys);
        assert!((a - 2.0).abs() < 1e-12 && (b + 0.5).abs() < 1e-12);
    }
}
