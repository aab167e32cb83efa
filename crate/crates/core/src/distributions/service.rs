use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{erlang_cdf, ln_factorial, poisson_pmf};
use statrs::function::gamma::ln_gamma;

/// Highest derivative order of the service-time transform that is supported.
pub const MAX_LST_ORDER: usize = 128;

const WEIGHT_TOL: f64 = 1e-12;

/// Law of the service time A.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ServiceTimeModel {
    Exponential { rate: f64 },
    Erlang { phases: usize, rate: f64 },
    Deterministic { value: f64 },
    HyperExponential { weights: Vec<f64>, rates: Vec<f64> },
}

impl ServiceTimeModel {
    pub fn exponential(rate: f64) -> Result<Self> {
        let m = ServiceTimeModel::Exponential { rate };
        m.validate()?;
        Ok(m)
    }

    pub fn erlang(phases: usize, rate: f64) -> Result<Self> {
        let m = ServiceTimeModel::Erlang { phases, rate };
        m.validate()?;
        Ok(m)
    }

    pub fn deterministic(value: f64) -> Result<Self> {
        let m = ServiceTimeModel::Deterministic { value };
        m.validate()?;
        Ok(m)
    }

    pub fn hyper_exponential(weights: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        let m = ServiceTimeModel::HyperExponential { weights, rates };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |r: f64, what: &str| {
            if r.is_finite() && r > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{what} must be positive and finite, got {r}")))
            }
        };
        match self {
            ServiceTimeModel::Exponential { rate } => positive(*rate, "exponential rate"),
            ServiceTimeModel::Erlang { phases, rate } => {
                if *phases == 0 {
                    return Err(Error::invalid("Erlang service needs at least one phase"));
                }
                positive(*rate, "Erlang rate")
            }
            ServiceTimeModel::Deterministic { value } => {
                if value.is_finite() && *value >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(format!(
                        "deterministic value must be nonnegative, got {value}"
                    )))
                }
            }
            ServiceTimeModel::HyperExponential { weights, rates } => {
                if weights.is_empty() || weights.len() != rates.len() {
                    return Err(Error::invalid(
                        "hyperexponential needs equally many weights and rates",
                    ));
                }
                for &p in weights {
                    if !(p > 0.0 && p <= 1.0) {
                        return Err(Error::invalid(format!(
                            "hyperexponential weight {p} is outside (0, 1]"
                        )));
                    }
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > WEIGHT_TOL {
                    return Err(Error::invalid(format!(
                        "hyperexponential weights sum to {total}, not 1"
                    )));
                }
                rates
                    .iter()
                    .try_for_each(|&r| positive(r, "hyperexponential rate"))
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            ServiceTimeModel::Exponential { rate } => 1.0 / rate,
            ServiceTimeModel::Erlang { phases, rate } => *phases as f64 / rate,
            ServiceTimeModel::Deterministic { value } => *value,
            ServiceTimeModel::HyperExponential { weights, rates } => {
                weights.iter().zip(rates).map(|(p, r)| p / r).sum()
            }
        }
    }

    /// Laplace–Stieltjes transform E[e^{-sA}].
    pub fn lst(&self, s: f64) -> f64 {
        match self {
            ServiceTimeModel::Exponential { rate } => rate / (rate + s),
            ServiceTimeModel::Erlang { phases, rate } => (rate / (rate + s)).powi(*phases as i32),
            ServiceTimeModel::Deterministic { value } => (-value * s).exp(),
            ServiceTimeModel::HyperExponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(p, r)| p * r / (r + s))
                .sum(),
        }
    }

    /// The `order`-th derivative of the transform at `s`, from the closed form
    /// of each variant. Its sign is `(-1)^order`.
    pub fn lst_derivative(&self, order: usize, s: f64) -> Result<f64> {
        if order > MAX_LST_ORDER {
            return Err(Error::Capacity(format!(
                "transform derivative of order {order} exceeds the supported {MAX_LST_ORDER}"
            )));
        }
        if order == 0 {
            return Ok(self.lst(s));
        }
        let sign = if order.is_multiple_of(2) { 1.0 } else { -1.0 };
        let m = order as f64;
        let magnitude = match self {
            ServiceTimeModel::Exponential { rate } => {
                (rate.ln() + ln_factorial(order) - (m + 1.0) * (rate + s).ln()).exp()
            }
            ServiceTimeModel::Erlang { phases, rate } => {
                let k = *phases as f64;
                (k * rate.ln() + ln_gamma(k + m) - ln_gamma(k) - (k + m) * (rate + s).ln()).exp()
            }
            ServiceTimeModel::Deterministic { value } => {
                if *value == 0.0 {
                    0.0
                } else {
                    (m * value.ln() - value * s).exp()
                }
            }
            ServiceTimeModel::HyperExponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(p, r)| p * (r.ln() + ln_factorial(order) - (m + 1.0) * (r + s).ln()).exp())
                .sum(),
        };
        Ok(sign * magnitude)
    }

    /// Probability that a Poisson process of rate `s` has exactly `m` points
    /// during one service time, i.e. `(-s)^m / m! * lst_derivative(m, s)`.
    /// Evaluated in log space so it stays finite for large `m`.
    pub fn phase_count_prob(&self, m: usize, s: f64) -> f64 {
        if s == 0.0 {
            return if m == 0 { 1.0 } else { 0.0 };
        }
        let mf = m as f64;
        match self {
            ServiceTimeModel::Exponential { rate } => {
                (rate.ln() + mf * s.ln() - (mf + 1.0) * (rate + s).ln()).exp()
            }
            ServiceTimeModel::Erlang { phases, rate } => {
                let k = *phases as f64;
                (ln_gamma(k + mf) - ln_gamma(k) - ln_factorial(m)
                    + k * (rate / (rate + s)).ln()
                    + mf * (s / (rate + s)).ln())
                .exp()
            }
            ServiceTimeModel::Deterministic { value } => poisson_pmf(s * value, m),
            ServiceTimeModel::HyperExponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(p, r)| p * (r.ln() + mf * s.ln() - (mf + 1.0) * (r + s).ln()).exp())
                .sum(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match self {
            ServiceTimeModel::Exponential { rate } => -(-rate * x).exp_m1(),
            ServiceTimeModel::Erlang { phases, rate } => erlang_cdf(*phases, *rate, x),
            ServiceTimeModel::Deterministic { value } => {
                if x >= *value {
                    1.0
                } else {
                    0.0
                }
            }
            ServiceTimeModel::HyperExponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(p, r)| -p * (-r * x).exp_m1())
                .sum(),
        }
    }

    /// P[A >= x], counting an atom at `x`.
    pub fn survival_inclusive(&self, x: f64) -> f64 {
        match self {
            ServiceTimeModel::Deterministic { value } => {
                if *value >= x {
                    1.0
                } else {
                    0.0
                }
            }
            _ => 1.0 - self.cdf(x),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ServiceTimeModel::Exponential { rate } => rng.sample::<f64, _>(Exp1) / rate,
            ServiceTimeModel::Erlang { phases, rate } => {
                (0..*phases).map(|_| rng.sample::<f64, _>(Exp1)).sum::<f64>() / rate
            }
            ServiceTimeModel::Deterministic { value } => *value,
            ServiceTimeModel::HyperExponential { weights, rates } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut branch = rates.len() - 1;
                for (i, p) in weights.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        branch = i;
                        break;
                    }
                }
                rng.sample::<f64, _>(Exp1) / rates[branch]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn variants() -> Vec<ServiceTimeModel> {
        vec![
            ServiceTimeModel::exponential(1.3).unwrap(),
            ServiceTimeModel::erlang(3, 2.5).unwrap(),
            ServiceTimeModel::deterministic(0.7).unwrap(),
            ServiceTimeModel::hyper_exponential(vec![0.3, 0.7], vec![1.0, 5.0]).unwrap(),
        ]
    }

    #[test]
    fn lst_examples() {
        let exp = ServiceTimeModel::exponential(1.0).unwrap();
        assert_eq!(exp.lst(1.0), 0.5);
        let det0 = ServiceTimeModel::deterministic(0.0).unwrap();
        assert_eq!(det0.lst(3.7), 1.0);
        let erl = ServiceTimeModel::erlang(2, 2.0).unwrap();
        assert!((erl.lst(2.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn derivative_order_zero_is_lst() {
        for m in variants() {
            for s in [0.1, 1.0, 10.0] {
                assert_eq!(m.lst_derivative(0, s).unwrap(), m.lst(s));
            }
        }
    }

    #[test]
    fn derivative_examples() {
        let exp = ServiceTimeModel::exponential(1.0).unwrap();
        assert!((exp.lst_derivative(1, 1.0).unwrap() + 0.25).abs() < 1e-15);
        let det = ServiceTimeModel::deterministic(2.0).unwrap();
        let expect = -8.0 * (-1.0f64).exp();
        assert!((det.lst_derivative(3, 0.5).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn derivative_signs_alternate() {
        for m in variants() {
            for k in 0..40 {
                let d = m.lst_derivative(k, 1.0).unwrap();
                if d != 0.0 {
                    assert_eq!(d.signum(), if k % 2 == 0 { 1.0 } else { -1.0 });
                }
            }
        }
    }

    #[test]
    fn unsupported_order_is_capacity_error() {
        let exp = ServiceTimeModel::exponential(1.0).unwrap();
        assert!(matches!(
            exp.lst_derivative(MAX_LST_ORDER + 1, 1.0),
            Err(Error::Capacity(_))
        ));
        assert!(exp.lst_derivative(64, 1.0).unwrap().is_finite());
    }

    #[test]
    fn phase_count_prob_matches_scaled_derivative() {
        for m in variants() {
            let s = 1.7;
            let mut total = 0.0;
            for k in 0..30 {
                let d = m.lst_derivative(k, s).unwrap();
                let scaled = (-s).powi(k as i32) * d / (ln_factorial(k).exp());
                let p = m.phase_count_prob(k, s);
                assert!((p - scaled).abs() <= 1e-12 * p.max(1e-300) + 1e-300, "{m:?} {k}");
                total += p;
            }
            // counts beyond 30 are negligible for these parameters
            assert!(total <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(ServiceTimeModel::exponential(0.0).is_err());
        assert!(ServiceTimeModel::erlang(0, 1.0).is_err());
        assert!(ServiceTimeModel::deterministic(-1.0).is_err());
        assert!(ServiceTimeModel::hyper_exponential(vec![0.5, 0.4], vec![1.0, 2.0]).is_err());
        assert!(ServiceTimeModel::hyper_exponential(vec![1.0], vec![1.0, 2.0]).is_err());
    }
}
