use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::erlang_cdf;

use super::{PrepTimeModel, ServiceTimeModel};

/// Atom at zero plus a mixture of Erlang(i, rate) laws, i = 1..N.
/// `weights[0]` is the atom; `weights[i]` the weight of Erlang-i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedErlangLaw {
    rate: f64,
    weights: Vec<f64>,
}

impl MixedErlangLaw {
    pub fn new(rate: f64, weights: Vec<f64>) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::invalid(format!("rate must be positive, got {rate}")));
        }
        if weights.is_empty() {
            return Err(Error::invalid("mixed-Erlang law needs at least the atom weight"));
        }
        if weights.iter().any(|&w| !(w >= -1e-12)) {
            return Err(Error::NumericalIntegrity(format!(
                "negative mixture weight in {weights:?}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::NumericalIntegrity(format!(
                "mixture weights sum to {total}"
            )));
        }
        let weights = weights.into_iter().map(|w| w.max(0.0)).collect();
        Ok(Self { rate, weights })
    }

    /// W = B for a preparation law B (no atom).
    pub fn from_prep(prep: &PrepTimeModel) -> Self {
        let mut weights = vec![0.0];
        weights.extend_from_slice(prep.weights());
        Self {
            rate: prep.rate(),
            weights,
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atom(&self) -> f64 {
        self.weights[0]
    }

    /// Largest Erlang order present in the representation.
    pub fn phases(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * erlang_cdf(i, self.rate, x))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * i as f64)
            .sum::<f64>()
            / self.rate
    }

    pub fn second_moment(&self) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * (i * (i + 1)) as f64)
            .sum::<f64>()
            / (self.rate * self.rate)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.second_moment() - m * m
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut phases = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                phases = i;
                break;
            }
        }
        (0..phases).map(|_| rng.sample::<f64, _>(Exp1)).sum::<f64>() / self.rate
    }
}

/// Any law the simulator can draw from. Preparation times in the analytic
/// engines are always mixed-Erlang; the simulator also accepts the service
/// families for B (e.g. deterministic B in sanity runs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TimeLaw {
    Service(ServiceTimeModel),
    Prep(PrepTimeModel),
}

impl TimeLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            TimeLaw::Service(m) => m.sample(rng),
            TimeLaw::Prep(m) => m.sample(rng),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            TimeLaw::Service(m) => m.mean(),
            TimeLaw::Prep(m) => m.mean(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            TimeLaw::Service(m) => m.cdf(x),
            TimeLaw::Prep(m) => m.cdf(x),
        }
    }

    /// The law as a mixed-Erlang preparation model, when it is one.
    pub fn as_prep(&self) -> Option<PrepTimeModel> {
        match self {
            TimeLaw::Prep(p) => Some(p.clone()),
            TimeLaw::Service(ServiceTimeModel::Exponential { rate }) => {
                PrepTimeModel::exponential(*rate).ok()
            }
            TimeLaw::Service(ServiceTimeModel::Erlang { phases, rate }) => {
                PrepTimeModel::erlang(*phases, *rate).ok()
            }
            TimeLaw::Service(_) => None,
        }
    }

    /// P[B <= A] for B drawn from this law and an independent service time A.
    pub fn prob_not_exceeding(&self, service: &ServiceTimeModel) -> Result<f64> {
        if let Some(prep) = self.as_prep() {
            return Ok(super::XDistribution::new(service.clone(), prep)?.raw_negative_prob());
        }
        match self {
            TimeLaw::Service(ServiceTimeModel::Deterministic { value }) => {
                Ok(service.survival_inclusive(*value))
            }
            TimeLaw::Service(ServiceTimeModel::HyperExponential { weights, rates }) => Ok(1.0
                - weights
                    .iter()
                    .zip(rates)
                    .map(|(p, r)| p * service.lst(*r))
                    .sum::<f64>()),
            _ => unreachable!("exponential and Erlang laws are handled as preparation models"),
        }
    }
}

impl From<ServiceTimeModel> for TimeLaw {
    fn from(m: ServiceTimeModel) -> Self {
        TimeLaw::Service(m)
    }
}

impl From<PrepTimeModel> for TimeLaw {
    fn from(m: PrepTimeModel) -> Self {
        TimeLaw::Prep(m)
    }
}
