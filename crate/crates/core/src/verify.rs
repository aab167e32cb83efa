//! Analytic-versus-simulation cross-checks, grouped into the criteria the
//! `verify` subcommand and the acceptance suite report on.
//!
//! Every check is a pure function of its scale (replications, seed), so a
//! report is reproducible byte for byte.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distributions::{MixedErlangLaw, PrepTimeModel, ServiceTimeModel};
use crate::error::Result;
use crate::exp_exact::{self, ExpCaseParams};
use crate::gf_fixedpoint::{GfProblem, DEFAULT_TOL};
use crate::initial::InitialCondition;
use crate::lindley_ref::{self, GM1Params};
use crate::numeric::compensated_sum;
use crate::phase_markov::{build_chain, moment_integral};
use crate::sim::{self, CycleMode, RecursionKind, SimConfig};
use crate::stats::SimEstimate;

/// Monte Carlo checks pass within this many standard errors.
pub const Z_LIMIT: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scale {
    pub replications: usize,
    pub seed: u64,
}

impl Scale {
    pub fn new(replications: usize, seed: u64) -> Self {
        Self { replications, seed }
    }

    /// A seed for sub-experiment `tag`, so experiments do not share streams.
    fn seed_for(&self, tag: u64) -> u64 {
        self.seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    /// |estimate - analytic| <= tolerance
    Within,
    /// estimate <= analytic + tolerance
    AtMost,
    /// estimate >= analytic
    AtLeast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub analytic: f64,
    pub estimate: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
}

impl CheckResult {
    pub fn within(name: impl Into<String>, analytic: f64, estimate: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            analytic,
            estimate,
            tolerance,
            comparison: Comparison::Within,
        }
    }

    pub fn at_most(name: impl Into<String>, limit: f64, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            analytic: limit,
            estimate: value,
            tolerance,
            comparison: Comparison::AtMost,
        }
    }

    pub fn at_least(name: impl Into<String>, limit: f64, value: f64) -> Self {
        Self {
            name: name.into(),
            analytic: limit,
            estimate: value,
            tolerance: 0.0,
            comparison: Comparison::AtLeast,
        }
    }

    /// Simulated proportion against its exact value, with the binomial
    /// standard error implied by the exact value.
    pub fn proportion(name: impl Into<String>, exact: f64, est: &SimEstimate) -> Self {
        let null_se = (exact * (1.0 - exact) / est.replications as f64).sqrt();
        let se = if null_se > 0.0 { null_se } else { est.stderr };
        Self::within(name, exact, est.value, Z_LIMIT * se)
    }

    /// Simulated mean-type quantity against its exact value.
    pub fn statistic(name: impl Into<String>, exact: f64, est: &SimEstimate) -> Self {
        Self::within(name, exact, est.value, Z_LIMIT * est.stderr)
    }

    pub fn passed(&self) -> bool {
        match self.comparison {
            Comparison::Within => (self.estimate - self.analytic).abs() <= self.tolerance,
            Comparison::AtMost => self.estimate <= self.analytic + self.tolerance,
            Comparison::AtLeast => self.estimate >= self.analytic,
        }
    }

    pub fn line(&self) -> String {
        let op = match self.comparison {
            Comparison::Within => "+-",
            Comparison::AtMost => "<=",
            Comparison::AtLeast => ">=",
        };
        format!(
            "{:<44} analytic={:>24.16e} estimate={:>24.16e} tol{op}{:.3e} {}",
            self.name,
            self.analytic,
            self.estimate,
            self.tolerance,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub title: String,
    pub checks: Vec<CheckResult>,
}

impl Section {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub sections: Vec<Section>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.sections.iter().all(Section::passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for s in &self.sections {
            let _ = writeln!(out, "== {} ({})", s.title, if s.passed() { "PASS" } else { "FAIL" });
            for c in &s.checks {
                let _ = writeln!(out, "{}", c.line());
            }
        }
        let total: usize = self.sections.iter().map(|s| s.checks.len()).sum();
        let failed: usize = self.sections.iter().map(Section::failures).sum();
        let _ = writeln!(
            out,
            "{} checks, {} failed: {}",
            total,
            failed,
            if failed == 0 { "PASS" } else { "FAIL" }
        );
        out
    }
}

fn exp(rate: f64) -> ServiceTimeModel {
    ServiceTimeModel::exponential(rate).expect("positive rate")
}

fn mm1_params(initial: InitialCondition) -> ExpCaseParams {
    ExpCaseParams::new(1.0, exp(1.0), initial).expect("valid M/M parameters")
}

/// P[W_n = 0] for n = 2..=5 from the first-order recursion, iterated from
/// P[W2 = 0] = 1 - a e^{-mu w1}.
fn first_order_zero_probs(a: f64, p2: f64, n_max: usize) -> Vec<f64> {
    let mut out = vec![p2];
    while out.len() + 1 < n_max {
        let z = *out.last().expect("nonempty");
        out.push(1.0 - a / 2.0 - a / 2.0 * z);
    }
    out
}

/// Exponential transient law with w1 = 0.
pub fn transient_exponential(scale: Scale) -> Result<Section> {
    let params = mm1_params(InitialCondition::zero());
    let mut checks = Vec::new();
    let oracle = first_order_zero_probs(0.5, 0.5, 5);
    let listed = [0.5, 0.625, 0.59375, 0.6015625];
    for (i, n) in (2..=5).enumerate() {
        let v = exp_exact::transient_cdf(&params, n, 0.0)?;
        checks.push(CheckResult::within(format!("P[W{n}=0] closed form vs recursion"), oracle[i], v, 1e-14));
        checks.push(CheckResult::within(format!("P[W{n}=0] closed form vs listed"), listed[i], v, 1e-14));
    }
    let cfg = SimConfig::new(RecursionKind::Alternating, exp(1.0), PrepTimeModel::exponential(1.0)?)
        .horizon(5)
        .replications(scale.replications)
        .seed(scale.seed_for(1))
        .x_grid(vec![0.0, 0.5, 1.0, 2.0]);
    let cdfs = sim::estimate_transient_cdfs(&cfg, &[2, 3, 4, 5])?;
    for c in &cdfs {
        for (x, est) in c.x.iter().zip(&c.cdf) {
            let exact = exp_exact::transient_cdf(&params, c.n, *x)?;
            checks.push(CheckResult::proportion(format!("sim P[W{}<={x}]", c.n), exact, est));
        }
    }
    Ok(Section {
        title: "exponential transient law".into(),
        checks,
    })
}

/// P[W2 > x | W1 = 0] at lambda = mu = 1: the closed form gives
/// 0.5 e^{-x}; the alternative (2/5 - (1/10)(-1/4)^n) e^{-x} at n = 1 gives
/// 0.425 e^{-x} and must be rejected by simulation.
pub fn w2_tail_erratum(scale: Scale) -> Result<Section> {
    let mut checks = Vec::new();
    let params = mm1_params(InitialCondition::zero());
    let xs = vec![0.0, 0.5, 1.0, 2.0];
    let cfg = SimConfig::new(RecursionKind::Alternating, exp(1.0), PrepTimeModel::exponential(1.0)?)
        .horizon(2)
        .replications(scale.replications)
        .seed(scale.seed_for(2))
        .x_grid(xs.clone());
    let cdf = sim::estimate_transient_cdf(&cfg, 2)?;
    for (x, est) in xs.iter().zip(&cdf.cdf) {
        let tail = SimEstimate {
            value: 1.0 - est.value,
            ..*est
        };
        let closed_tail = 0.5 * (-x).exp();
        let closed = 1.0 - exp_exact::transient_cdf(&params, 2, *x)?;
        checks.push(CheckResult::within(format!("closed form P[W2>{x}] = 0.5e^-x"), closed_tail, closed, 1e-15));
        checks.push(CheckResult::proportion(format!("sim P[W2>{x}] vs 0.5e^-x"), closed_tail, &tail));
        let text = (0.4 - 0.1 * -0.25) * (-x).exp();
        let z = (tail.value - text).abs() / (text * (1.0 - text) / tail.replications as f64).sqrt();
        checks.push(CheckResult::at_least(format!("sim rejects 0.425e^-x at x={x} (z)"), Z_LIMIT, z));
    }
    Ok(Section {
        title: "W2 tail erratum".into(),
        checks,
    })
}

/// Exact cycle pmf against a long-path histogram, for n <= n_max, with an
/// injectable pmf so that a mutated law can be shown to fail.
pub fn cycle_law_with<F: Fn(f64, usize) -> f64>(scale: Scale, n_max: usize, pmf: F) -> Result<Section> {
    let params = mm1_params(InitialCondition::zero());
    let a = params.a();
    let cfg = SimConfig::new(RecursionKind::Alternating, exp(1.0), PrepTimeModel::exponential(1.0)?)
        .seed(scale.seed_for(3));
    let cycles = scale.replications.max(100_000) as u64;
    let hist = sim::estimate_cycle_distribution(&cfg, n_max, cycles, CycleMode::LongPath)?;
    let mut checks = Vec::new();
    for n in 1..=n_max {
        checks.push(CheckResult::proportion(format!("sim P[C={n}]"), pmf(a, n), &hist.estimate(n)));
    }
    Ok(Section {
        title: "cycle law".into(),
        checks,
    })
}

pub fn exact_cycle_pmf(a: f64, n: usize) -> f64 {
    if n == 1 {
        1.0 - a
    } else {
        (1.0 - a / 2.0) * (a / 2.0).powi(n as i32 - 2) * a
    }
}

pub fn cycle_law(scale: Scale) -> Result<Section> {
    let mut section = cycle_law_with(scale, 8, exact_cycle_pmf)?;
    let listed = [0.5, 0.375, 0.09375];
    let params = mm1_params(InitialCondition::zero());
    for (i, want) in listed.iter().enumerate() {
        section.checks.push(CheckResult::within(
            format!("P[C={}] listed value", i + 1),
            *want,
            exp_exact::cycle_pmf(&params, i + 1)?,
            1e-15,
        ));
    }
    for lambda in [0.01, 0.5, 1.0, 3.0, 99.0] {
        let p = ExpCaseParams::new(1.0, exp(lambda), InitialCondition::zero())?;
        let mut worst: f64 = 0.0;
        for n in 1..=60 {
            let partial = compensated_sum((1..=n).map(|c| exp_exact::cycle_pmf(&p, c).unwrap()));
            worst = worst.max((partial + exp_exact::cycle_tail(&p, n)? - 1.0).abs());
        }
        section.checks.push(CheckResult::at_most(
            format!("cycle pmf partial sums + tail, a={:.4}", p.a()),
            1e-14,
            worst,
            0.0,
        ));
    }
    Ok(section)
}

/// Stationary M/M covariance: cov(k) = 0.44 (-1/4)^k.
pub fn covariance_exponential(scale: Scale) -> Result<Section> {
    let params = mm1_params(InitialCondition::Stationary);
    let mut checks = Vec::new();
    for k in 1..=20usize {
        let c = exp_exact::covariance(&params, 1, k)?;
        let want = 0.44 * (-0.25f64).powi(k as i32);
        checks.push(CheckResult::within(format!("cov({k}) = 0.44(-1/4)^k"), want, c, 1e-15 * want.abs().max(1e-300) + 1e-17));
        let sign_ok = if k % 2 == 0 { c > 0.0 } else { c < 0.0 };
        checks.push(CheckResult::within(format!("sign cov({k}) = (-1)^k"), 1.0, if sign_ok { 1.0 } else { 0.0 }, 0.0));
        let bound = 0.4 * 1.0 * 0.5f64.powi(k as i32);
        checks.push(CheckResult::within(format!("coupling bound k={k} closed form"), bound, exp_exact::covariance_bound(&params, k)?, 1e-15));
        checks.push(CheckResult::at_most(format!("|cov({k})| <= bound"), bound, c.abs(), 0.0));
    }
    let cfg = SimConfig::new(RecursionKind::Alternating, exp(1.0), PrepTimeModel::exponential(1.0)?)
        .initial(InitialCondition::Stationary)
        .horizon(5)
        .replications(scale.replications)
        .seed(scale.seed_for(4));
    let ks = [1, 2, 3, 4];
    let est = sim::estimate_covariances(&cfg, 1, &ks)?;
    for (k, e) in ks.iter().zip(&est) {
        checks.push(CheckResult::statistic(
            format!("sim cov({k})"),
            exp_exact::covariance(&params, 1, *k)?,
            e,
        ));
    }
    Ok(Section {
        title: "exponential covariance".into(),
        checks,
    })
}

/// N = 1 phase chain against the exponential closed forms.
pub fn phase_reduction() -> Result<Section> {
    let mut checks = Vec::new();
    let xs: Vec<f64> = (0..64).map(|i| i as f64 * 0.125).collect();
    for (lambda, mu, initial) in [
        (1.0, 1.0, InitialCondition::zero()),
        (0.4, 1.3, InitialCondition::Fixed(0.7)),
        (2.5, 0.8, InitialCondition::EqualsB1),
        (1.0, 1.0, InitialCondition::Stationary),
    ] {
        let tag = format!("lambda={lambda},mu={mu},{initial:?}");
        let service = exp(lambda);
        let prep = PrepTimeModel::exponential(mu)?;
        let chain = build_chain(&prep, &service)?;
        let params = ExpCaseParams::new(mu, service, initial.clone())?;
        let laws = chain.phase_laws(&initial, 60)?;
        let mut cdf_err: f64 = 0.0;
        for n in 2..=50 {
            let law = laws[n - 2].to_waiting_dist(mu)?;
            for &x in &xs {
                cdf_err = cdf_err.max((law.cdf(x) - exp_exact::transient_cdf(&params, n, x)?).abs());
            }
        }
        checks.push(CheckResult::at_most(format!("N=1 cdf n<=50 [{tag}]"), 1e-12, cdf_err, 0.0));
        let pmf = chain.cycle_pmfs(50)?;
        let cyc_err = (1..=50)
            .map(|n| (pmf[n - 1] - exp_exact::cycle_pmf(&params, n).unwrap()).abs())
            .fold(0.0, f64::max);
        checks.push(CheckResult::at_most(format!("N=1 cycle pmf n<=50 [{tag}]"), 1e-12, cyc_err, 0.0));
        let mut cov_err: f64 = 0.0;
        for n in 2..=50 {
            for k in 1..=10 {
                let a = chain.covariance(&initial, n, k)?;
                let b = exp_exact::covariance(&params, n, k)?;
                cov_err = cov_err.max((a - b).abs());
            }
        }
        checks.push(CheckResult::at_most(format!("N=1 covariance n<=50,k<=10 [{tag}]"), 1e-12, cov_err, 0.0));
    }
    Ok(Section {
        title: "phase chain reduction".into(),
        checks,
    })
}

/// Adaptive Simpson quadrature on [a, b] with absolute tolerance `tol`;
/// recursion stops 40 levels down.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            left + right + diff / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Integral of w^{j+1} e^{-mu w} against a mixed-Erlang law by quadrature.
pub fn moment_integral_quadrature(law: &MixedErlangLaw, j: usize) -> f64 {
    let mu = law.rate();
    let f = |w: f64| {
        let density: f64 = law
            .weights()
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, p)| p * crate::numeric::erlang_pdf(i, mu, w))
            .sum();
        w.powi(j as i32 + 1) * (-mu * w).exp() * density
    };
    let end = (law.phases() + j + 80) as f64 / mu;
    // split where the integrand is concentrated to help the adaptive rule
    let peak = (law.phases() + j) as f64 / (2.0 * mu);
    let cuts = [0.0, 0.5 * peak, peak, 2.0 * peak + 1.0 / mu, 4.0 * peak + 4.0 / mu, end];
    // coarse pass fixes the scale, then a relative tolerance well below 1e-9
    let m = 2000;
    let h = end / m as f64;
    let rough: f64 = (0..m).map(|i| h * f((i as f64 + 0.5) * h)).sum();
    let tol = 1e-13 * rough.abs() / (cuts.len() - 1) as f64;
    cuts.windows(2).map(|c| adaptive_simpson(&f, c[0], c[1], tol)).sum()
}

/// Erlang and mixed-Erlang preparation times against simulation.
pub fn erlang_case(scale: Scale) -> Result<Section> {
    let mut checks = Vec::new();
    let service = exp(1.0);
    let mut tag = 10;
    for phases in [2usize, 3] {
        for mu in [1.0, 2.0] {
            tag += 1;
            let label = format!("N={phases},mu={mu}");
            let prep = PrepTimeModel::erlang(phases, mu)?;
            let chain = build_chain(&prep, &service)?;
            let initial = InitialCondition::zero();
            let xs: Vec<f64> = [0.0, 0.5, 1.0, 2.0, 4.0].iter().map(|x| x * phases as f64 / mu).collect();
            let cfg = SimConfig::new(RecursionKind::Alternating, service.clone(), prep.clone())
                .horizon(8)
                .replications(scale.replications)
                .seed(scale.seed_for(tag))
                .x_grid(xs);
            let steps = [2, 3, 5, 8];
            for c in sim::estimate_transient_cdfs(&cfg, &steps)? {
                for (x, est) in c.x.iter().zip(&c.cdf) {
                    let exact = chain.transient_cdf(&initial, c.n, *x)?;
                    checks.push(CheckResult::proportion(format!("{label} sim P[W{}<={x:.3}]", c.n), exact, est));
                }
            }
            let cyc_cfg = cfg.clone().seed(scale.seed_for(tag + 100));
            let hist = sim::estimate_cycle_distribution(&cyc_cfg, 10, scale.replications as u64, CycleMode::LongPath)?;
            let pmf = chain.cycle_pmfs(10)?;
            for n in 1..=10 {
                checks.push(CheckResult::proportion(format!("{label} sim P[C={n}]"), pmf[n - 1], &hist.estimate(n)));
            }
            let cov_cfg = cfg.clone().seed(scale.seed_for(tag + 200)).horizon(6);
            let ks = [1, 2, 3];
            for (k, e) in ks.iter().zip(sim::estimate_covariances(&cov_cfg, 3, &ks)?) {
                checks.push(CheckResult::statistic(
                    format!("{label} sim cov(W3,W{})", 3 + k),
                    chain.covariance(&initial, 3, *k)?,
                    &e,
                ));
            }
            for k in 1..=6usize {
                let c = chain.covariance(&InitialCondition::Stationary, 1, k)?;
                let sign_ok = if k % 2 == 0 { c > 0.0 } else { c < 0.0 };
                checks.push(CheckResult::within(format!("{label} stationary sign cov({k})"), 1.0, if sign_ok { 1.0 } else { 0.0 }, 0.0));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(scale.seed_for(50));
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(1..=8usize);
        let mu = rng.random_range(0.2..5.0);
        let raw: Vec<f64> = (0..=n).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let law = MixedErlangLaw::new(mu, weights)?;
        let j = rng.random_range(0..=n);
        let closed = moment_integral(&law, j);
        let quad = moment_integral_quadrature(&law, j);
        worst = worst.max(((closed - quad) / quad).abs());
    }
    checks.push(CheckResult::at_most("moment integral vs quadrature (50 tuples, rel)", 1e-9, worst, 0.0));
    Ok(Section {
        title: "Erlang preparation times".into(),
        checks,
    })
}

/// Truncated exact series (1 - r) sum_{n<=80} r^n P[W_{n+1} <= x] versus
/// the fixed-point solution.
pub fn contraction_solver() -> Result<Section> {
    let mut checks = Vec::new();
    let service = exp(1.0);
    let prep = PrepTimeModel::exponential(1.0)?;
    let initial = InitialCondition::zero();
    let params = mm1_params(initial.clone());
    let problem = GfProblem::new(&service, &prep, &initial)?;
    for r in [0.25, 0.5, 0.75] {
        let sol = problem.solve(r, DEFAULT_TOL)?;
        let mut worst: f64 = 0.0;
        for &x in problem.grid() {
            let series = compensated_sum(
                (0..=80).map(|n| r.powi(n as i32) * exp_exact::transient_cdf(&params, n + 1, x).unwrap()),
            );
            worst = worst.max(((1.0 - r) * (sol.eval(x) - series)).abs());
        }
        checks.push(CheckResult::at_most(
            format!("r={r} sup|(1-r)H - series|"),
            sol.certificate + r.powi(81) / (1.0 - r),
            worst,
            0.0,
        ));
        let c = sol.contraction_coefficient;
        let ratio = sol.contraction_ratios().into_iter().fold(0.0, f64::max);
        checks.push(CheckResult::at_most(format!("r={r} contraction ratio"), c + 1e-3, ratio, 0.0));
    }
    Ok(Section {
        title: "contraction solver".into(),
        checks,
    })
}

/// G/M/1 reference: root, pgf series and the rho = 1 transient series.
pub fn lindley_reference(scale: Scale) -> Result<Section> {
    let mut checks = Vec::new();
    let mut worst: f64 = 0.0;
    for lambda in [0.2, 0.5, 1.0, 1.5, 3.0] {
        for r in [0.05, 0.3, 0.5, 0.8, 0.99] {
            let mu = 1.0;
            let eta = lindley_ref::eta_root_bracketed(&GM1Params::new(mu, exp(lambda), r)?)?;
            worst = worst.max((eta - lindley_ref::mm1_eta(lambda, mu, r)).abs());
        }
    }
    checks.push(CheckResult::at_most("eta root vs M/M closed form (5x5 grid)", 1e-10, worst, 0.0));
    for rho in [0.5, 0.9, 1.0] {
        for r in [0.3, 0.6, 0.9] {
            let p = GM1Params::new(1.0, exp(rho), r)?;
            let pgf = lindley_ref::busy_cycle_pgf(&p)?;
            let mut sum = crate::numeric::CompensatedSum::new();
            for n in 1.. {
                let term = r.powi(n as i32) * lindley_ref::mm1_busy_cycle_pmf(rho, n)?;
                sum.add(term);
                if term < 1e-16 {
                    break;
                }
            }
            checks.push(CheckResult::within(format!("busy pgf vs pmf series rho={rho} r={r}"), pgf, sum.value(), 1e-8));
        }
    }
    let xs = vec![0.0, 0.5, 1.0, 2.0, 3.0];
    let cfg = SimConfig::new(RecursionKind::Lindley, exp(1.0), PrepTimeModel::exponential(1.0)?)
        .horizon(11)
        .replications(scale.replications)
        .seed(scale.seed_for(60))
        .x_grid(xs);
    let steps: Vec<usize> = (1..=11).collect();
    for c in sim::estimate_transient_cdfs(&cfg, &steps)? {
        let k = c.n - 1;
        for (x, est) in c.x.iter().zip(&c.cdf) {
            let tail = SimEstimate {
                value: 1.0 - est.value,
                ..*est
            };
            let series = lindley_ref::mm1_rho1_transient_tail(1.0, k, *x, 1e-17)?;
            checks.push(CheckResult::proportion(format!("rho=1 sim P[W^L_{}>{x}]", k + 1), series, &tail));
        }
    }
    Ok(Section {
        title: "Lindley reference".into(),
        checks,
    })
}

/// Two runs of the same simulation give bit-identical estimates.
pub fn reproducibility(scale: Scale) -> Result<Section> {
    let cfg = SimConfig::new(RecursionKind::Alternating, exp(1.0), PrepTimeModel::erlang(2, 1.0)?)
        .horizon(6)
        .replications(scale.replications.min(20_000))
        .seed(scale.seed_for(70))
        .x_grid(vec![0.0, 1.0]);
    let a = sim::estimate_transient_cdf(&cfg, 6)?;
    let b = sim::estimate_transient_cdf(&cfg, 6)?;
    let same = a == b;
    Ok(Section {
        title: "reproducibility".into(),
        checks: vec![CheckResult::within(
            "repeat simulation is bit-identical",
            1.0,
            if same { 1.0 } else { 0.0 },
            0.0,
        )],
    })
}

/// Every section at the given scale.
pub fn run_all(scale: Scale) -> Result<Report> {
    Ok(Report {
        sections: vec![
            transient_exponential(scale)?,
            w2_tail_erratum(scale)?,
            cycle_law(scale)?,
            covariance_exponential(scale)?,
            phase_reduction()?,
            erlang_case(scale)?,
            contraction_solver()?,
            lindley_reference(scale)?,
            reproducibility(scale)?,
        ],
    })
}
