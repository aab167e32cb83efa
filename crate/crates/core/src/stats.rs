//! Monte Carlo estimates and goodness-of-fit statistics.

use serde::{Deserialize, Serialize};

/// Point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub value: f64,
    pub stderr: f64,
    pub replications: usize,
}

impl SimEstimate {
    /// Empirical proportion `hits / n` with binomial standard error.
    pub fn proportion(hits: u64, n: usize) -> Self {
        let p = hits as f64 / n as f64;
        Self {
            value: p,
            stderr: (p * (1.0 - p) / n as f64).sqrt(),
            replications: n,
        }
    }

    /// |value - target| in units of the binomial standard error implied by
    /// `target` (one-sample z-test), which stays meaningful for empty bins.
    pub fn z_score_proportion(&self, target: f64) -> f64 {
        let null_se = (target * (1.0 - target) / self.replications as f64).sqrt();
        let se = if null_se > 0.0 { null_se } else { self.stderr };
        let diff = (self.value - target).abs();
        if diff == 0.0 {
            0.0
        } else {
            diff / se
        }
    }

    pub fn z_score(&self, target: f64) -> f64 {
        let diff = (self.value - target).abs();
        if diff == 0.0 {
            0.0
        } else {
            diff / self.stderr
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample covariance (two-pass).
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    let mx = mean(xs);
    let my = mean(ys);
    let s: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    s / (xs.len() as f64 - 1.0)
}

/// Covariance estimate with a batch-means standard error over `batches`
/// contiguous groups.
pub fn covariance_batch_means(xs: &[f64], ys: &[f64], batches: usize) -> SimEstimate {
    let n = xs.len();
    let value = covariance(xs, ys);
    let batch_values: Vec<f64> = (0..batches)
        .map(|b| {
            let lo = b * n / batches;
            let hi = (b + 1) * n / batches;
            covariance(&xs[lo..hi], &ys[lo..hi])
        })
        .collect();
    let bm = mean(&batch_values);
    let var = batch_values.iter().map(|v| (v - bm) * (v - bm)).sum::<f64>() / (batches as f64 - 1.0);
    SimEstimate {
        value,
        stderr: (var / batches as f64).sqrt(),
        replications: n,
    }
}

/// One-sample Kolmogorov–Smirnov statistic. Sorts `samples` in place.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> f64 {
    samples.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let lo = f - i as f64 / n;
            let hi = (i + 1) as f64 / n - f;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic critical value of the KS statistic at significance `alpha`.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt() / (n as f64).sqrt()
}
