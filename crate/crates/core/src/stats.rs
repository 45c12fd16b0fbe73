//! Streaming moments and the deterministic parallel sample driver.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScatterError};

/// Samples per work unit. Chunks are reduced in index order, so results do not
/// depend on the number of worker threads.
pub const CHUNK: usize = 64;

/// One-pass mean/variance accumulator with an associative merge.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; `None` below two samples.
    pub fn variance(&self) -> Option<f64> {
        (self.count >= 2).then(|| self.m2 / (self.count - 1) as f64)
    }

    pub fn std_dev(&self) -> Option<f64> {
        self.variance().map(f64::sqrt)
    }

    pub fn estimate(&self) -> Result<MonteCarloEstimate> {
        let var = self.variance().ok_or_else(|| {
            ScatterError::param("n", format!("need at least 2 samples, got {}", self.count))
        })?;
        Ok(MonteCarloEstimate {
            mean: self.mean,
            standard_error: (var / self.count as f64).sqrt(),
            n_samples: self.count,
        })
    }
}

impl FromIterator<f64> for Welford {
    fn from_iter<T: IntoIterator<Item = f64>>(iter: T) -> Self {
        let mut w = Welford::new();
        for x in iter {
            w.push(x);
        }
        w
    }
}

/// Sample mean with its standard error `s / sqrt(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub standard_error: f64,
    pub n_samples: u64,
}

impl MonteCarloEstimate {
    /// `(mean - target) / standard_error`. A zero standard error gives 0 on an exact
    /// match and infinity otherwise.
    pub fn z_score(&self, target: f64) -> f64 {
        let diff = self.mean - target;
        if self.standard_error > 0.0 {
            diff / self.standard_error
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(diff)
        }
    }

    pub fn within(&self, target: f64, n_se: f64) -> bool {
        self.z_score(target).abs() <= n_se
    }
}

/// Runs `sample(k)` for `k in 0..n`, folding each chunk of [`CHUNK`] consecutive
/// indices into an accumulator on a worker thread, then merging the chunk results
/// sequentially in index order.
pub fn par_fold<A, S, F, M>(n: usize, init: impl Fn() -> A + Sync, sample: S, fold: F, merge: M) -> A
where
    A: Send,
    S: Fn(usize) -> A + Sync,
    F: Fn(&mut A, A) + Sync,
    M: Fn(&mut A, A),
{
    let n_chunks = n.div_ceil(CHUNK);
    let parts: Vec<A> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut acc = init();
            let start = chunk * CHUNK;
            for k in start..(start + CHUNK).min(n) {
                fold(&mut acc, sample(k));
            }
            acc
        })
        .collect();
    let mut total = init();
    for part in parts {
        merge(&mut total, part);
    }
    total
}

/// `f(0..n)` in index order, evaluated in parallel; stops at an error.
pub fn par_collect<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    (0..n).into_par_iter().map(&f).collect()
}

/// Deterministic parallel mean/variance of `f(k)` for `k in 0..n`.
pub fn par_welford<F>(n: usize, f: F) -> Welford
where
    F: Fn(usize) -> f64 + Sync,
{
    par_fold(
        n,
        Welford::new,
        |k| {
            let mut w = Welford::new();
            w.push(f(k));
            w
        },
        |acc, w| acc.merge(&w),
        |acc, w| acc.merge(&w),
    )
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
