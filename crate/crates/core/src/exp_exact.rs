//! Closed forms for exponential preparation times B ~ exp(mu).
//!
//! Every W_n (n >= 2) is an atom at zero plus an exp(mu) tail, so the whole
//! transient law is carried by the scalar P[W_n > 0], which obeys the
//! first-order recursion P[W_{n+1} = 0] = 1 - a/2 - (a/2) P[W_n = 0] with
//! a = alpha(mu).

use serde::{Deserialize, Serialize};

use crate::distributions::{MixedErlangLaw, PrepTimeModel, ServiceTimeModel};
use crate::error::{Error, Result};
use crate::initial::InitialCondition;
use crate::numeric::signed_pow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpCaseParams {
    mu: f64,
    service: ServiceTimeModel,
    a: f64,
    initial: InitialCondition,
}

impl ExpCaseParams {
    /// Requires a = alpha(mu) strictly inside (0, 1). A `Law` initial
    /// condition must be an atom plus an exp(mu) component.
    pub fn new(mu: f64, service: ServiceTimeModel, initial: InitialCondition) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::invalid(format!("mu must be positive, got {mu}")));
        }
        service.validate()?;
        let a = service.lst(mu);
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Regeneration(1.0 - a));
        }
        match &initial {
            InitialCondition::Fixed(w) if !(w.is_finite() && *w >= 0.0) => {
                return Err(Error::invalid(format!("w1 must be nonnegative, got {w}")));
            }
            InitialCondition::Law(law) if law.phases() > 1 || law.rate() != mu => {
                return Err(Error::invalid(
                    "exponential engine accepts only an atom plus exp(mu) initial law",
                ));
            }
            _ => {}
        }
        Ok(Self {
            mu,
            service,
            a,
            initial,
        })
    }

    pub fn from_prep(prep: &PrepTimeModel, service: ServiceTimeModel, initial: InitialCondition) -> Result<Self> {
        if !prep.is_exponential() {
            return Err(Error::invalid(
                "exponential engine needs a single-phase preparation time",
            ));
        }
        Self::new(prep.rate(), service, initial)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// a = alpha(mu).
    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn service(&self) -> &ServiceTimeModel {
        &self.service
    }

    pub fn initial(&self) -> &InitialCondition {
        &self.initial
    }

    pub fn with_initial(&self, initial: InitialCondition) -> Result<Self> {
        Self::new(self.mu, self.service.clone(), initial)
    }

    /// P[W1 > 0].
    fn initial_positive_prob(&self) -> f64 {
        match &self.initial {
            InitialCondition::Fixed(w) => {
                if *w > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            InitialCondition::EqualsB1 => 1.0,
            InitialCondition::Stationary => limiting_positive_prob(self),
            InitialCondition::Law(law) => 1.0 - law.atom(),
        }
    }

    /// Whether W1 given W1 > 0 is exp(mu), so that n = 1 formulas apply.
    fn initial_is_exponential(&self) -> bool {
        !matches!(self.initial, InitialCondition::Fixed(w) if w > 0.0)
    }
}

/// Atom at zero with weight p0 and an exp(rate) tail of weight 1 - p0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaitingDist {
    pub p_zero: f64,
    pub rate: f64,
}

impl WaitingDist {
    pub fn positive_prob(&self) -> f64 {
        1.0 - self.p_zero
    }

    pub fn tail(&self, x: f64) -> f64 {
        if x < 0.0 {
            1.0
        } else {
            self.positive_prob() * (-self.rate * x).exp()
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        1.0 - self.tail(x)
    }

    pub fn mean(&self) -> f64 {
        self.positive_prob() / self.rate
    }

    pub fn variance(&self) -> f64 {
        let p = self.positive_prob();
        p * (2.0 - p) / (self.rate * self.rate)
    }

    pub fn to_law(&self) -> MixedErlangLaw {
        MixedErlangLaw::new(self.rate, vec![self.p_zero, 1.0 - self.p_zero])
            .expect("atom weight lies in [0, 1]")
    }
}

/// P[W2 = 0] under the configured initial condition.
pub fn p_w2_zero(params: &ExpCaseParams) -> f64 {
    let a = params.a;
    match &params.initial {
        InitialCondition::Fixed(w) => 1.0 - (-params.mu * w).exp() * a,
        InitialCondition::EqualsB1 => 1.0 - a / 2.0,
        InitialCondition::Stationary => stationary_zero_prob(a),
        InitialCondition::Law(law) => {
            let p = 1.0 - law.atom();
            1.0 - (1.0 - p) * a - p * a / 2.0
        }
    }
}

fn stationary_zero_prob(a: f64) -> f64 {
    (2.0 - a) / (2.0 + a)
}

/// P[W_n > 0]. For n = 1 this is the initial law.
pub fn positive_prob(params: &ExpCaseParams, n: usize) -> Result<f64> {
    match n {
        0 => Err(Error::invalid("steps are numbered from 1")),
        1 => Ok(params.initial_positive_prob()),
        _ => {
            let a = params.a;
            let limit = 2.0 * a / (2.0 + a);
            let offset = stationary_zero_prob(a) - p_w2_zero(params);
            Ok(limit + signed_pow(-a / 2.0, (n - 2) as u64) * offset)
        }
    }
}

/// Law of W_n as an atom plus exp(mu) tail. For n = 1 a fixed w1 > 0 is not
/// of this form and is rejected.
pub fn waiting_dist(params: &ExpCaseParams, n: usize) -> Result<WaitingDist> {
    if n == 1 && !params.initial_is_exponential() {
        return Err(Error::invalid(
            "W1 is a point mass at w1 > 0, not an atom plus exponential",
        ));
    }
    Ok(WaitingDist {
        p_zero: 1.0 - positive_prob(params, n)?,
        rate: params.mu,
    })
}

/// P[W_n <= x].
pub fn transient_cdf(params: &ExpCaseParams, n: usize, x: f64) -> Result<f64> {
    if x < 0.0 {
        return Ok(0.0);
    }
    if n == 1 {
        if let InitialCondition::Fixed(w) = params.initial {
            return Ok(if x >= w { 1.0 } else { 0.0 });
        }
    }
    Ok(waiting_dist(params, n)?.cdf(x))
}

/// 2a / (2 + a), the limit of P[W_n > 0].
pub fn limiting_positive_prob(params: &ExpCaseParams) -> f64 {
    2.0 * params.a / (2.0 + params.a)
}

pub fn stationary_dist(params: &ExpCaseParams) -> WaitingDist {
    WaitingDist {
        p_zero: stationary_zero_prob(params.a),
        rate: params.mu,
    }
}

/// Geometric rate a/2 at which P[W_n <= x] approaches its limit.
pub fn convergence_rate(params: &ExpCaseParams) -> f64 {
    params.a / 2.0
}

/// P[C = n] for the regeneration cycle started from W1 = 0.
pub fn cycle_pmf(params: &ExpCaseParams, n: usize) -> Result<f64> {
    let a = params.a;
    match n {
        0 => Err(Error::invalid("cycle lengths start at 1")),
        1 => Ok(1.0 - a),
        _ => Ok((1.0 - a / 2.0) * (a / 2.0).powi((n - 2) as i32) * a),
    }
}

/// P[C >= n + 1] = P[C > n].
pub fn cycle_tail(params: &ExpCaseParams, n: usize) -> Result<f64> {
    if n == 0 {
        return Ok(1.0);
    }
    let a = params.a;
    Ok((a / 2.0).powi((n - 1) as i32) * a)
}

/// E[C] = sum of tails = 1 + a / (1 - a/2).
pub fn cycle_mean(params: &ExpCaseParams) -> f64 {
    1.0 + params.a / (1.0 - params.a / 2.0)
}

/// cov[W_n, W_{n+k}] for k >= 1. n = 1 is allowed only when W1 given
/// W1 > 0 is exp(mu).
pub fn covariance(params: &ExpCaseParams, n: usize, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("covariance formula excludes k = 0; use variance"));
    }
    if n == 0 || (n == 1 && !params.initial_is_exponential()) {
        return Err(Error::invalid(
            "covariance at n = 1 needs W1 | W1 > 0 to be exp(mu)",
        ));
    }
    let p = positive_prob(params, n)?;
    let mean = p / params.mu;
    Ok(mean / params.mu * ((1.0 - p) + 0.5) * signed_pow(-params.a / 2.0, k as u64))
}

/// var[W_n] = p (2 - p) / mu^2 with p = P[W_n > 0].
pub fn variance(params: &ExpCaseParams, n: usize) -> Result<f64> {
    if n == 1 {
        if let InitialCondition::Fixed(_) = params.initial {
            return Ok(0.0);
        }
    }
    let p = positive_prob(params, n)?;
    Ok(p * (2.0 - p) / (params.mu * params.mu))
}

/// E[W_n].
pub fn mean(params: &ExpCaseParams, n: usize) -> Result<f64> {
    if n == 1 {
        if let InitialCondition::Fixed(w) = params.initial {
            return Ok(w);
        }
    }
    Ok(positive_prob(params, n)? / params.mu)
}

/// E[W1] E[X | X > 0] P[X > 0]^k.
pub fn coupling_bound(mean_w1: f64, mean_x_given_positive: f64, p_x_positive: f64, k: usize) -> f64 {
    mean_w1 * mean_x_given_positive * p_x_positive.powi(k as i32)
}

/// The coupling bound with the exponential closed forms E[X | X > 0] = 1/mu
/// and P[X > 0] = a.
pub fn covariance_bound(params: &ExpCaseParams, k: usize) -> Result<f64> {
    Ok(coupling_bound(mean(params, 1)?, 1.0 / params.mu, params.a, k))
}
