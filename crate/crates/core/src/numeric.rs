//! Small numerical helpers shared by the engines: compensated summation,
//! log-space combinatorics, signed powers and the Erlang CDF.

use statrs::function::gamma::{gamma_lr, ln_gamma};

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// ln(n!)
pub fn ln_factorial(n: usize) -> f64 {
    if n < 2 {
        0.0
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

/// ln C(n, k) for integers.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    debug_assert!(k <= n);
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Poisson pmf e^{-t} t^m / m!, evaluated in log space.
pub fn poisson_pmf(t: f64, m: usize) -> f64 {
    if t == 0.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    (-t + m as f64 * t.ln() - ln_factorial(m)).exp()
}

/// `base^k` computed by squaring the magnitude, with the sign tracked
/// separately from the parity of `k`.
pub fn signed_pow(base: f64, k: u64) -> f64 {
    let negative = base < 0.0 && k % 2 == 1;
    let mut result = 1.0;
    let mut b = base.abs();
    let mut e = k;
    while e > 0 {
        if e & 1 == 1 {
            result *= b;
        }
        b *= b;
        e >>= 1;
    }
    if negative {
        -result
    } else {
        result
    }
}

/// CDF of the Erlang(`phases`, `rate`) law; `phases == 0` is the unit atom at zero.
pub fn erlang_cdf(phases: usize, rate: f64, x: f64) -> f64 {
    if phases == 0 {
        return 1.0;
    }
    if x <= 0.0 {
        return 0.0;
    }
    gamma_lr(phases as f64, rate * x)
}

/// Density of the Erlang(`phases`, `rate`) law for `phases >= 1`.
pub fn erlang_pdf(phases: usize, rate: f64, x: f64) -> f64 {
    if x < 0.0 || phases == 0 {
        return 0.0;
    }
    if x == 0.0 {
        return if phases == 1 { rate } else { 0.0 };
    }
    rate * poisson_pmf(rate * x, phases - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let xs = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(compensated_sum(xs), 2.0);
    }

    #[test]
    fn signed_pow_tracks_parity() {
        assert_eq!(signed_pow(-0.25, 1), -0.25);
        assert_eq!(signed_pow(-0.25, 2), 0.0625);
        assert_eq!(signed_pow(-0.5, 0), 1.0);
        assert!((signed_pow(-0.25, 7) - (-0.25f64).powi(7)).abs() < 1e-18);
    }

    #[test]
    fn erlang_cdf_matches_poisson_tail() {
        let (k, rate, x) = (3usize, 2.0, 1.3);
        let tail: f64 = (0..k).map(|m| poisson_pmf(rate * x, m)).sum();
        assert!((erlang_cdf(k, rate, x) - (1.0 - tail)).abs() < 1e-14);
        assert!((erlang_cdf(1, 1.0, 0.7) - (1.0 - (-0.7f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn poisson_pmf_sums_to_one() {
        let s: f64 = (0..200).map(|m| poisson_pmf(17.5, m)).sum();
        assert!((s - 1.0).abs() < 1e-13);
    }
}
