//! G/M/1 reference quantities for Lindley's recursion
//! W^L_{n+1} = max(0, B_{n+1} - A_n + W^L_n) with B ~ exp(mu), W^L_1 = 0.

use serde::{Deserialize, Serialize};

use crate::distributions::ServiceTimeModel;
use crate::error::{Error, Result};
use crate::numeric::{erlang_cdf, erlang_pdf, ln_binomial, CompensatedSum};
use crate::stats::{ks_critical_value, ks_statistic};

/// Largest mu x accepted by the rho = 1 series.
pub const RHO1_MAX_MU_X: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GM1Params {
    pub mu: f64,
    pub service: ServiceTimeModel,
    pub r: f64,
}

impl GM1Params {
    pub fn new(mu: f64, service: ServiceTimeModel, r: f64) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::invalid(format!("mu must be positive, got {mu}")));
        }
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::invalid(format!("r must lie in (0, 1), got {r}")));
        }
        service.validate()?;
        Ok(Self { mu, service, r })
    }
}

/// The unique eta in (0, mu) with mu r alpha(eta) = mu - eta. Exponential
/// interarrivals use the closed form, everything else the bracketing solver.
pub fn eta_root(p: &GM1Params) -> Result<f64> {
    if let ServiceTimeModel::Exponential { rate } = p.service {
        return Ok(mm1_eta(rate, p.mu, p.r));
    }
    eta_root_bracketed(p)
}

/// eta by Illinois regula falsi on (0, mu): g(eta) = mu r alpha(eta) - (mu - eta)
/// is convex with g(0) < 0 < g(mu), so the bracket always holds a root.
pub fn eta_root_bracketed(p: &GM1Params) -> Result<f64> {
    let mu = p.mu;
    let g = |eta: f64| mu * p.r * p.service.lst(eta) - (mu - eta);
    let (mut lo, mut hi) = (0.0, mu * (1.0 - 1e-12));
    let (mut g_lo, mut g_hi) = (g(lo), g(hi));
    if !(g_lo < 0.0 && g_hi > 0.0) {
        return Err(Error::NumericalIntegrity(format!(
            "root bracket failed: g(0) = {g_lo}, g(mu) = {g_hi}"
        )));
    }
    // Illinois iteration run to full precision; the bracket endpoint with the
    // smaller residual is returned.
    let mut side = 0i8;
    for _ in 0..500 {
        let mut x = (lo * g_hi - hi * g_lo) / (g_hi - g_lo);
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
            if !(x > lo && x < hi) {
                break;
            }
        }
        let gx = g(x);
        if gx == 0.0 {
            return Ok(x);
        }
        if gx < 0.0 {
            lo = x;
            g_lo = gx;
            if side == -1 {
                g_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            g_hi = gx;
            if side == 1 {
                g_lo *= 0.5;
            }
            side = 1;
        }
    }
    let (r_lo, r_hi) = (g(lo).abs(), g(hi).abs());
    let eta = if r_lo <= r_hi { lo } else { hi };
    if r_lo.min(r_hi) > 1e-12 * mu {
        return Err(Error::NumericalIntegrity(format!("eta residual {} too large", r_lo.min(r_hi))));
    }
    Ok(eta)
}

/// eta(r) for exponential interarrivals with rate lambda.
pub fn mm1_eta(lambda: f64, mu: f64, r: f64) -> f64 {
    let d = mu - lambda;
    let c = 4.0 * lambda * mu * (1.0 - r);
    let s = (d * d + c).sqrt();
    if d >= 0.0 {
        0.5 * (d + s)
    } else {
        // avoids cancellation in d + s
        0.5 * c / (s - d)
    }
}

/// P[M_r > x] = (1 - eta/mu) e^{-eta x} = (1 - r) sum_n r^n P[W^L_{n+1} > x].
pub fn geometric_tail(p: &GM1Params, x: f64) -> Result<f64> {
    if x < 0.0 {
        return Err(Error::invalid("x must be nonnegative"));
    }
    let eta = eta_root(p)?;
    Ok((1.0 - eta / p.mu) * (-eta * x).exp())
}

/// E[r^{C^L}] = (eta - mu (1 - r)) / eta.
pub fn busy_cycle_pgf(p: &GM1Params) -> Result<f64> {
    let eta = eta_root(p)?;
    Ok((eta - p.mu * (1.0 - p.r)) / eta)
}

/// lambda(r) = 1 - eta(r)/mu, the smallest root of z - r alpha(mu (1 - z)).
pub fn busy_cycle_root(p: &GM1Params) -> Result<f64> {
    Ok(1.0 - eta_root(p)? / p.mu)
}

/// P[C^L = n] for the M/M/1 queue with load rho.
pub fn mm1_busy_cycle_pmf(rho: f64, n: usize) -> Result<f64> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::invalid(format!("rho must be positive, got {rho}")));
    }
    if n == 0 {
        return Err(Error::invalid("busy cycles have length at least 1"));
    }
    let m = 2 * n - 1;
    Ok((ln_binomial(m, n) - (m as f64).ln() + (n - 1) as f64 * rho.ln()
        - m as f64 * (1.0 + rho).ln())
    .exp())
}

/// Generalized binomial coefficient a (a-1) ... (a-j+1) / j!.
pub fn gen_binomial(a: f64, j: usize) -> f64 {
    let mut v = 1.0;
    for i in 0..j {
        v *= (a - i as f64) / (i + 1) as f64;
    }
    v
}

/// P[W^L_{k+1} > x] for the M/M/1 queue with lambda = mu and W^L_1 = 0:
/// (-1)^k sum_n ((-mu x)^n / n!) [C(n/2 - 1, k) - C((n-1)/2, k)].
/// Terms are added until they stay below `trunc_tol`.
pub fn mm1_rho1_transient_tail(mu: f64, k: usize, x: f64, trunc_tol: f64) -> Result<f64> {
    if !(mu > 0.0) || !(x >= 0.0) {
        return Err(Error::invalid("need mu > 0 and x >= 0"));
    }
    let t = mu * x;
    if t > RHO1_MAX_MU_X {
        return Err(Error::LossOfPrecision(format!(
            "mu x = {t} exceeds {RHO1_MAX_MU_X}; the alternating series cancels beyond double precision"
        )));
    }
    let mut sum = CompensatedSum::new();
    // (-t)^n / n! built incrementally
    let mut power = 1.0;
    let mut quiet = 0;
    let n_min = (2.0 * t) as usize + k + 4;
    for n in 0..10_000usize {
        if n > 0 {
            power *= -t / n as f64;
        }
        let nf = n as f64;
        let term = power * (gen_binomial(nf / 2.0 - 1.0, k) - gen_binomial((nf - 1.0) / 2.0, k));
        sum.add(term);
        if n > n_min {
            quiet = if term.abs() < trunc_tol { quiet + 1 } else { 0 };
            if quiet >= 4 {
                break;
            }
        }
    }
    let v = sum.value();
    let v = if k % 2 == 1 { -v } else { v };
    Ok(v.clamp(0.0, 1.0))
}

/// Mixed-Erlang fit of positive samples with a known rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedErlangFit {
    pub order: usize,
    /// weights[i-1] for Erlang-i, i = 1..=order
    pub weights: Vec<f64>,
    pub ks: f64,
    pub critical: f64,
}

/// EM estimate of Erlang(1..=order, rate) mixture weights.
pub fn fit_mixed_erlang(samples: &[f64], rate: f64, order: usize, iterations: usize) -> Vec<f64> {
    let mut w = vec![1.0 / order as f64; order];
    let mut resp = vec![0.0; order];
    for _ in 0..iterations {
        let mut acc = vec![0.0; order];
        for &x in samples {
            let mut total = 0.0;
            for (i, r) in resp.iter_mut().enumerate() {
                *r = w[i] * erlang_pdf(i + 1, rate, x);
                total += *r;
            }
            if total > 0.0 {
                for (a, r) in acc.iter_mut().zip(&resp) {
                    *a += r / total;
                }
            }
        }
        let n = samples.len() as f64;
        for (wi, a) in w.iter_mut().zip(&acc) {
            *wi = a / n;
        }
    }
    w
}

/// Smallest mixture order (up to `max_order`) whose EM fit passes a KS test
/// at level `alpha` against the positive samples.
pub fn minimal_erlang_order(
    positive_samples: &[f64],
    rate: f64,
    max_order: usize,
    alpha: f64,
) -> Result<MixedErlangFit> {
    if positive_samples.is_empty() {
        return Err(Error::invalid("no positive samples to fit"));
    }
    let critical = ks_critical_value(positive_samples.len(), alpha);
    let mut sorted = positive_samples.to_vec();
    let mut last = None;
    for order in 1..=max_order {
        let weights = fit_mixed_erlang(positive_samples, rate, order, 200);
        let cdf = |x: f64| {
            weights
                .iter()
                .enumerate()
                .map(|(i, w)| w * erlang_cdf(i + 1, rate, x))
                .sum::<f64>()
        };
        let ks = ks_statistic(&mut sorted, cdf);
        let fit = MixedErlangFit {
            order,
            weights,
            ks,
            critical,
        };
        if ks <= critical {
            return Ok(fit);
        }
        last = Some(fit);
    }
    Ok(last.expect("max_order >= 1"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mm(lambda: f64, mu: f64, r: f64) -> GM1Params {
        GM1Params::new(mu, ServiceTimeModel::exponential(lambda).unwrap(), r).unwrap()
    }

    #[test]
    fn eta_examples() {
        let eta = eta_root(&mm(1.0, 1.0, 0.5)).unwrap();
        assert_eq!(eta, 0.5f64.sqrt());
        let eta = eta_root_bracketed(&mm(1.0, 1.0, 0.5)).unwrap();
        assert!((eta - 0.5f64.sqrt()).abs() < 1e-12);
        let eta = eta_root(&mm(1.0, 2.0, 1.0 - 1e-12)).unwrap();
        assert!((eta - 1.0).abs() < 1e-9);
        let p = GM1Params::new(1.3, ServiceTimeModel::deterministic(0.8).unwrap(), 0.7).unwrap();
        let eta = eta_root(&p).unwrap();
        let residual = p.mu * p.r * p.service.lst(eta) - (p.mu - eta);
        assert!(residual.abs() <= 1e-12 * p.mu);
    }

    #[test]
    fn geometric_tail_and_pgf_examples() {
        let p = mm(1.0, 1.0, 0.5);
        let s = 0.5f64.sqrt();
        assert!((geometric_tail(&p, 0.0).unwrap() - (1.0 - s)).abs() < 1e-12);
        assert!((geometric_tail(&p, 1.0).unwrap() - (1.0 - s) * (-s).exp()).abs() < 1e-12);
        assert!((busy_cycle_pgf(&p).unwrap() - (s - 0.5) / s).abs() < 1e-12);
    }

    #[test]
    fn busy_pmf_examples() {
        assert!((mm1_busy_cycle_pmf(0.7, 1).unwrap() - 1.0 / 1.7).abs() < 1e-15);
        assert!((mm1_busy_cycle_pmf(1.0, 2).unwrap() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn rho1_series_boundary_values() {
        for x in [0.0, 0.7, 3.0] {
            assert_eq!(mm1_rho1_transient_tail(1.0, 0, x, 1e-16).unwrap(), 0.0);
            let w2 = mm1_rho1_transient_tail(1.0, 1, x, 1e-16).unwrap();
            assert!((w2 - 0.5 * (-x).exp()).abs() < 1e-13);
        }
        for k in 0..12 {
            let at0 = mm1_rho1_transient_tail(1.0, k, 0.0, 1e-16).unwrap();
            let central: f64 = (1..=k).map(|i| (k + i) as f64 / i as f64).product();
            let want = 1.0 - central / 4f64.powi(k as i32);
            assert!((at0 - want).abs() < 1e-14, "k = {k}: {at0} vs {want}");
        }
        assert!(matches!(
            mm1_rho1_transient_tail(1.0, 3, 31.0, 1e-12),
            Err(Error::LossOfPrecision(_))
        ));
    }
}
