use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{erlang_cdf, erlang_pdf};

/// Mixed-Erlang preparation time B: with probability `weights[k - 1]` it is
/// the sum of `k` exponential phases of rate `rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepTimeModel {
    rate: f64,
    weights: Vec<f64>,
}

impl PrepTimeModel {
    pub fn new(rate: f64, weights: Vec<f64>) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::invalid(format!(
                "preparation rate must be positive, got {rate}"
            )));
        }
        if weights.is_empty() {
            return Err(Error::invalid("preparation law needs at least one phase weight"));
        }
        if weights.iter().any(|&q| !(0.0..=1.0).contains(&q)) {
            return Err(Error::invalid("phase weights must lie in [0, 1]"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("phase weights sum to {total}, not 1")));
        }
        let mut weights = weights;
        while weights.len() > 1 && *weights.last().unwrap() == 0.0 {
            weights.pop();
        }
        Ok(Self { rate, weights })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(rate, vec![1.0])
    }

    pub fn erlang(phases: usize, rate: f64) -> Result<Self> {
        if phases == 0 {
            return Err(Error::invalid("Erlang preparation needs at least one phase"));
        }
        let mut weights = vec![0.0; phases];
        weights[phases - 1] = 1.0;
        Self::new(rate, weights)
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Largest number of phases N.
    pub fn max_phases(&self) -> usize {
        self.weights.len()
    }

    /// Probability of needing exactly `k` phases (`k` is 1-based).
    pub fn phase_weight(&self, k: usize) -> f64 {
        if k == 0 || k > self.weights.len() {
            0.0
        } else {
            self.weights[k - 1]
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// P[K > m] for the phase count K.
    pub fn phase_tail(&self, m: usize) -> f64 {
        self.weights.iter().skip(m).sum()
    }

    pub fn is_exponential(&self) -> bool {
        self.weights.len() == 1
    }

    pub fn mean(&self) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, q)| q * (i + 1) as f64)
            .sum::<f64>()
            / self.rate
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &q)| q > 0.0)
            .map(|(i, q)| q * erlang_cdf(i + 1, self.rate, x))
            .sum()
    }

    pub fn survival(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        let t = self.rate * x;
        // P[B > x] = sum_m P[K > m] e^{-t} t^m / m!
        (0..self.weights.len())
            .map(|m| self.phase_tail(m) * crate::numeric::poisson_pmf(t, m))
            .sum()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, q)| q * erlang_pdf(i + 1, self.rate, x))
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let phases = if self.weights.len() == 1 {
            1
        } else {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut k = self.weights.len();
            for (i, q) in self.weights.iter().enumerate() {
                acc += q;
                if u < acc {
                    k = i + 1;
                    break;
                }
            }
            k
        };
        (0..phases).map(|_| rng.sample::<f64, _>(Exp1)).sum::<f64>() / self.rate
    }

    /// Point `x` with `P[B > x] < eps`, found by doubling then bisection.
    pub fn tail_truncation(&self, eps: f64) -> f64 {
        let mut hi = self.mean().max(1.0 / self.rate);
        while self.survival(hi) >= eps {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.survival(mid) >= eps {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-9 * hi {
                break;
            }
        }
        hi
    }
}
