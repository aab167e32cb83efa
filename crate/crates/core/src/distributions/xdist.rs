use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, poisson_pmf};

use super::{PrepTimeModel, ServiceTimeModel};

/// X = B' - A for an independent copy B' of the preparation time.
///
/// All quantities on the positive half-line reduce to Poisson counts of the
/// preparation phases (rate mu) during A, which the service law provides in
/// closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct XDistribution {
    service: ServiceTimeModel,
    prep: PrepTimeModel,
    /// counts[m] = P[exactly m phases expire during A], m = 0..N-1
    counts: Vec<f64>,
}

impl XDistribution {
    pub fn new(service: ServiceTimeModel, prep: PrepTimeModel) -> Result<Self> {
        service.validate()?;
        let mu = prep.rate();
        let counts = (0..prep.max_phases())
            .map(|m| service.phase_count_prob(m, mu))
            .collect();
        Ok(Self {
            service,
            prep,
            counts,
        })
    }

    pub fn service(&self) -> &ServiceTimeModel {
        &self.service
    }

    pub fn prep(&self) -> &PrepTimeModel {
        &self.prep
    }

    pub fn count_probs(&self) -> &[f64] {
        &self.counts
    }

    /// P[X > 0].
    pub fn positive_prob(&self) -> f64 {
        self.positive_tail(0.0)
    }

    /// P[X <= 0] without the regeneration check.
    pub fn raw_negative_prob(&self) -> f64 {
        1.0 - self.positive_prob()
    }

    /// P[X <= 0], required to lie strictly inside (0, 1).
    pub fn negative_prob(&self) -> Result<f64> {
        let p = self.raw_negative_prob();
        if p > 0.0 && p < 1.0 {
            Ok(p)
        } else {
            Err(Error::Regeneration(p))
        }
    }

    /// P[X > y] for y >= 0.
    pub fn positive_tail(&self, y: f64) -> f64 {
        prep_exceeds(&self.prep, &self.counts, y)
    }

    /// F_X(y) for y >= 0.
    pub fn cdf_nonneg(&self, y: f64) -> f64 {
        1.0 - self.positive_tail(y)
    }

    /// Density of X at y >= 0.
    pub fn positive_density(&self, y: f64) -> f64 {
        prep_density_after(&self.prep, &self.counts, y)
    }

    /// E[X^+]: given that m phases expire during A, B' - A exceeds zero by
    /// the K - m remaining phases.
    pub fn mean_positive_part(&self) -> f64 {
        let n = self.prep.max_phases();
        let mu = self.prep.rate();
        compensated_sum((1..=n).flat_map(|k| {
            let qk = self.prep.phase_weight(k);
            (0..k).map(move |m| qk * self.counts[m] * (k - m) as f64 / mu)
        }))
    }

    /// E[X | X > 0].
    pub fn mean_given_positive(&self) -> f64 {
        self.mean_positive_part() / self.positive_prob()
    }
}

/// P[exactly m phases expire during D + y] given the count pmf of D.
pub(crate) fn shifted_count(delay_counts: &[f64], t: f64, m: usize) -> f64 {
    compensated_sum(
        (0..=m)
            .filter(|&l| m - l < delay_counts.len())
            .map(|l| delay_counts[m - l] * poisson_pmf(t, l)),
    )
}

/// P[B' > D + y] where `delay_counts[m]` is the probability that m phases of
/// B' expire during the delay D (only m < N matters).
pub(crate) fn prep_exceeds(prep: &PrepTimeModel, delay_counts: &[f64], y: f64) -> f64 {
    let t = prep.rate() * y.max(0.0);
    compensated_sum(
        (0..prep.max_phases()).map(|m| prep.phase_tail(m) * shifted_count(delay_counts, t, m)),
    )
}

/// Density in y of B' - D at y >= 0.
pub(crate) fn prep_density_after(prep: &PrepTimeModel, delay_counts: &[f64], y: f64) -> f64 {
    let mu = prep.rate();
    let t = mu * y.max(0.0);
    mu * compensated_sum(
        (0..prep.max_phases())
            .map(|m| prep.phase_weight(m + 1) * shifted_count(delay_counts, t, m)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(service: ServiceTimeModel, prep: PrepTimeModel) -> XDistribution {
        XDistribution::new(service, prep).unwrap()
    }

    #[test]
    fn exponential_pair_is_one_half() {
        let d = x(
            ServiceTimeModel::exponential(1.0).unwrap(),
            PrepTimeModel::exponential(1.0).unwrap(),
        );
        assert!((d.negative_prob().unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn erlang_two_prep_against_exponential_service() {
        // P[B' <= A] = P[at least two phases expire during A] = (1/2)^2
        let d = x(
            ServiceTimeModel::exponential(1.0).unwrap(),
            PrepTimeModel::erlang(2, 1.0).unwrap(),
        );
        assert!((d.negative_prob().unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_service_does_not_regenerate() {
        let d = x(
            ServiceTimeModel::deterministic(0.0).unwrap(),
            PrepTimeModel::exponential(1.0).unwrap(),
        );
        assert!(matches!(d.negative_prob(), Err(Error::Regeneration(p)) if p == 0.0));
    }

    #[test]
    fn exponential_tail_and_density_closed_form() {
        // P[X > y] = a e^{-mu y} with a = lambda / (lambda + mu)
        let (lambda, mu) = (2.0, 1.5);
        let d = x(
            ServiceTimeModel::exponential(lambda).unwrap(),
            PrepTimeModel::exponential(mu).unwrap(),
        );
        let a = lambda / (lambda + mu);
        for y in [0.0, 0.3, 2.0] {
            assert!((d.positive_tail(y) - a * (-mu * y).exp()).abs() < 1e-15);
            assert!((d.positive_density(y) - mu * a * (-mu * y).exp()).abs() < 1e-14);
        }
        assert!((d.mean_given_positive() - 1.0 / mu).abs() < 1e-14);
    }

    #[test]
    fn density_integrates_to_positive_mass() {
        let d = x(
            ServiceTimeModel::erlang(2, 3.0).unwrap(),
            PrepTimeModel::new(1.0, vec![0.2, 0.0, 0.8]).unwrap(),
        );
        // composite Simpson on [0, 60]
        let n = 60_000;
        let h = 60.0 / n as f64;
        let mut s = d.positive_density(0.0) + d.positive_density(60.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * d.positive_density(i as f64 * h);
        }
        let integral = s * h / 3.0;
        assert!((integral - d.positive_prob()).abs() < 1e-10);
    }
}
