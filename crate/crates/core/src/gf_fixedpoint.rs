//! Fixed-point solver for H(r, x) = sum_n r^n P[W_{n+1} <= x].
//!
//! H is the fixed point of
//!   (T_r F)(x) = P[W1 <= x] + r/(1-r) - r * int_0^inf F(u) f_X(u + x) du,
//! a contraction with coefficient |r| P[X > 0]. The iteration runs on
//! G = H - P[W1 <= .], which is continuous even when W1 has atoms; the W1
//! part of the integral, P[X - W1 >= x], is available in closed form.
//! Between grid points G is linear and beyond the grid it is constant.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{prep_exceeds, MixedErlangLaw, PrepTimeModel, ServiceTimeModel, XDistribution};
use crate::error::{Error, Result};
use crate::initial::InitialCondition;
use crate::numeric::{compensated_sum, ln_binomial, ln_factorial};
use crate::output::{Table, Value};
use crate::phase_markov::build_chain;

pub const DEFAULT_GRID_POINTS: usize = 2048;
pub const DEFAULT_TOL: f64 = 1e-12;
/// Preparation tail mass allowed beyond the grid.
const GRID_TAIL: f64 = 1e-12;
/// Tail mass of X below which a quadrature row is cut off.
const ROW_CUTOFF: f64 = 1e-18;
/// Trapezoid panels per grid interval.
const PANELS: usize = 16;
const MAX_ITERATIONS: usize = 100_000;

/// F_X on [0, inf) for X = B' - A with mixed-Erlang B'. On the positive
/// half-line both the tail and the density are e^{-mu y} times a
/// polynomial in mu y.
#[derive(Debug, Clone, PartialEq)]
pub struct XCdf {
    mu: f64,
    tail_coeffs: Vec<f64>,
    density_coeffs: Vec<f64>,
    positive: f64,
    truncation: f64,
}

impl XCdf {
    /// Requires F_X(0) strictly inside (0, 1).
    pub fn new(service: &ServiceTimeModel, prep: &PrepTimeModel) -> Result<Self> {
        let xd = XDistribution::new(service.clone(), prep.clone())?;
        xd.negative_prob()?;
        let n = prep.max_phases();
        let mu = prep.rate();
        let counts = xd.count_probs();
        // P[X > y] = sum_m P[K > m] sum_{l<=m} pi_{m-l} e^{-t} t^l / l!
        let mut tail_coeffs = vec![0.0; n];
        let mut density_coeffs = vec![0.0; n];
        for l in 0..n {
            let inv_fact = (-ln_factorial(l)).exp();
            tail_coeffs[l] = inv_fact
                * compensated_sum((l..n).map(|m| prep.phase_tail(m) * counts[m - l]));
            density_coeffs[l] = mu
                * inv_fact
                * compensated_sum((l..n).map(|m| prep.phase_weight(m + 1) * counts[m - l]));
        }
        Ok(Self {
            mu,
            positive: xd.positive_prob(),
            tail_coeffs,
            density_coeffs,
            truncation: prep.tail_truncation(GRID_TAIL),
        })
    }

    fn series(coeffs: &[f64], t: f64) -> f64 {
        (-t).exp() * coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    /// P[X > y] for y >= 0.
    pub fn tail(&self, y: f64) -> f64 {
        Self::series(&self.tail_coeffs, self.mu * y.max(0.0))
    }

    /// Density of X at y >= 0.
    pub fn density(&self, y: f64) -> f64 {
        Self::series(&self.density_coeffs, self.mu * y.max(0.0))
    }

    /// F_X(y) for y >= 0.
    pub fn cdf(&self, y: f64) -> f64 {
        1.0 - self.tail(y)
    }

    pub fn positive_prob(&self) -> f64 {
        self.positive
    }

    /// Point beyond which the preparation tail is below 1e-12.
    pub fn truncation(&self) -> f64 {
        self.truncation
    }
}

/// Law of W1 as used by the solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum W1Law {
    Fixed(f64),
    MixedErlang(MixedErlangLaw),
}

impl W1Law {
    pub fn from_initial(
        initial: &InitialCondition,
        prep: &PrepTimeModel,
        service: &ServiceTimeModel,
    ) -> Result<Self> {
        Ok(match initial {
            InitialCondition::Fixed(w) => {
                if !(w.is_finite() && *w >= 0.0) {
                    return Err(Error::invalid(format!("w1 must be nonnegative, got {w}")));
                }
                W1Law::Fixed(*w)
            }
            InitialCondition::EqualsB1 => W1Law::MixedErlang(MixedErlangLaw::from_prep(prep)),
            InitialCondition::Law(law) => W1Law::MixedErlang(law.clone()),
            InitialCondition::Stationary => {
                let chain = build_chain(prep, service)?;
                W1Law::MixedErlang(chain.stationary_law()?.to_waiting_dist(prep.rate())?)
            }
        })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            W1Law::Fixed(w) => {
                if x >= *w {
                    1.0
                } else {
                    0.0
                }
            }
            W1Law::MixedErlang(law) => law.cdf(x),
        }
    }

    /// Density on (0, inf); `None` for a point mass away from zero.
    pub fn density(&self, x: f64) -> Option<f64> {
        match self {
            W1Law::Fixed(w) if *w > 0.0 => None,
            W1Law::Fixed(_) => Some(0.0),
            W1Law::MixedErlang(law) => Some(compensated_sum(
                law.weights()
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(i, w)| w * crate::numeric::erlang_pdf(i, law.rate(), x)),
            )),
        }
    }

    fn upper(&self) -> f64 {
        match self {
            W1Law::Fixed(w) => *w,
            W1Law::MixedErlang(law) => {
                // Erlang-N quantile well into the tail
                let n = law.phases() as f64;
                (n + 12.0 * n.sqrt() + 30.0) / law.rate()
            }
        }
    }

    /// P[X - W1 >= x] for x >= 0 and W1 independent of X.
    fn exceedance(&self, x_cdf: &XCdf, service: &ServiceTimeModel, prep: &PrepTimeModel, x: f64) -> f64 {
        match self {
            W1Law::Fixed(w) => x_cdf.tail(x + w),
            W1Law::MixedErlang(law) => {
                let mu = prep.rate();
                let n = prep.max_phases();
                let counts: Vec<f64> = (0..n).map(|m| service.phase_count_prob(m, mu)).collect();
                let p = law.rate() / (law.rate() + mu);
                compensated_sum(law.weights().iter().enumerate().map(|(i, &wi)| {
                    if wi == 0.0 {
                        return 0.0;
                    }
                    let delay: Vec<f64> = (0..n)
                        .map(|m| {
                            compensated_sum((0..=m).map(|l| {
                                counts[m - l] * negative_binomial(i, p, l)
                            }))
                        })
                        .collect();
                    wi * prep_exceeds(prep, &delay, x)
                }))
            }
        }
    }
}

/// P[l points of rate mu fall in an Erlang(i, nu) time], p = nu / (nu + mu).
fn negative_binomial(i: usize, p: f64, l: usize) -> f64 {
    if i == 0 {
        return if l == 0 { 1.0 } else { 0.0 };
    }
    (ln_binomial(i + l - 1, l) + i as f64 * p.ln() + l as f64 * (1.0 - p).ln()).exp()
}

/// Grid of `points` nodes on [0, x_max]: geometric up to 2% of x_max, then
/// uniform.
pub fn build_grid(x_max: f64, points: usize) -> Result<Vec<f64>> {
    if points < 16 {
        return Err(Error::invalid("grid needs at least 16 points"));
    }
    if !(x_max.is_finite() && x_max > 0.0) {
        return Err(Error::invalid(format!("grid end must be positive, got {x_max}")));
    }
    let geometric = points / 8;
    let x_b = 0.02 * x_max;
    let mut grid = vec![0.0];
    for k in 1..=geometric {
        let s = (geometric - k) as f64 / (geometric - 1) as f64;
        grid.push(x_b * 10f64.powf(-6.0 * s));
    }
    let linear = points - 1 - grid.len();
    for k in 1..=linear {
        grid.push(x_b + (x_max - x_b) * k as f64 / linear as f64);
    }
    Ok(grid)
}

/// Values on a grid for a fixed r.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFn {
    pub r: f64,
    pub x: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridFn {
    /// Linear interpolation, constant beyond the grid.
    pub fn eval(&self, x: f64) -> f64 {
        interpolate(&self.x, &self.values, x)
    }
}

fn interpolate(grid: &[f64], values: &[f64], x: f64) -> f64 {
    if x <= grid[0] {
        return values[0];
    }
    let last = grid.len() - 1;
    if x >= grid[last] {
        return values[last];
    }
    let m = grid.partition_point(|&g| g <= x) - 1;
    let t = (x - grid[m]) / (grid[m + 1] - grid[m]);
    values[m] + t * (values[m + 1] - values[m])
}

/// Quadrature row: weights on nodes `0..len` such that
/// int_0^inf F(u) f_X(u + x_i) du ~= sum_m w[m] F[m].
#[derive(Debug, Clone, PartialEq)]
struct Row {
    weights: Vec<f64>,
    error: f64,
}

/// Everything about a (service, prep, W1) triple that does not depend on r.
#[derive(Debug, Clone)]
pub struct GfProblem {
    x_cdf: XCdf,
    w1: W1Law,
    grid: Vec<f64>,
    rows: Vec<Row>,
    /// P[X - W1 >= x_i]
    exceed: Vec<f64>,
    /// P[W1 <= x_i]
    w1_cdf: Vec<f64>,
    /// P[B > x_max]
    grid_tail: f64,
}

impl GfProblem {
    pub fn new(service: &ServiceTimeModel, prep: &PrepTimeModel, initial: &InitialCondition) -> Result<Self> {
        Self::with_grid(service, prep, initial, DEFAULT_GRID_POINTS, None)
    }

    /// `x_max = None` picks the end so that the preparation tail beyond it
    /// is below 1e-12; an explicit end that leaves more than 1e-8 of that
    /// tail is rejected.
    pub fn with_grid(
        service: &ServiceTimeModel,
        prep: &PrepTimeModel,
        initial: &InitialCondition,
        points: usize,
        x_max: Option<f64>,
    ) -> Result<Self> {
        let x_cdf = XCdf::new(service, prep)?;
        let w1 = W1Law::from_initial(initial, prep, service)?;
        let x_max = match x_max {
            None => x_cdf.truncation() + w1.upper(),
            Some(x) => {
                let tail = prep.survival(x);
                if tail > 1e-8 {
                    return Err(Error::GridTooShort(format!(
                        "P[B > {x}] = {tail:e} exceeds 1e-8"
                    )));
                }
                x
            }
        };
        let grid = build_grid(x_max, points)?;
        let rows: Vec<Row> = grid
            .par_iter()
            .map(|&x| quadrature_row(&x_cdf, &grid, x))
            .collect();
        let exceed = grid
            .iter()
            .map(|&x| w1.exceedance(&x_cdf, service, prep, x))
            .collect();
        let w1_cdf = grid.iter().map(|&x| w1.cdf(x)).collect();
        Ok(Self {
            grid_tail: prep.survival(x_max),
            x_cdf,
            w1,
            grid,
            rows,
            exceed,
            w1_cdf,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn x_cdf(&self) -> &XCdf {
        &self.x_cdf
    }

    pub fn w1(&self) -> &W1Law {
        &self.w1
    }

    /// |r| P[X > 0].
    pub fn contraction_coefficient(&self, r: f64) -> f64 {
        r.abs() * self.x_cdf.positive_prob()
    }

    /// Largest estimated quadrature error of a row, per unit sup-norm of F.
    pub fn quadrature_error(&self) -> f64 {
        self.rows.iter().map(|r| r.error).fold(0.0, f64::max)
    }

    fn integral(&self, i: usize, f: &[f64]) -> f64 {
        compensated_sum(self.rows[i].weights.iter().zip(f).map(|(w, v)| w * v))
    }

    /// T_r applied to a function given by its node values.
    pub fn apply_t(&self, r: f64, f: &GridFn) -> Result<GridFn> {
        check_r(r)?;
        if f.x != self.grid {
            return Err(Error::invalid("function must live on the problem grid"));
        }
        let values = (0..self.grid.len())
            .map(|i| self.w1_cdf[i] + r / (1.0 - r) - r * self.integral(i, &f.values))
            .collect();
        Ok(GridFn {
            r,
            x: self.grid.clone(),
            values,
        })
    }

    fn apply_t_continuous(&self, r: f64, g: &[f64]) -> Vec<f64> {
        (0..self.grid.len())
            .into_par_iter()
            .map(|i| r / (1.0 - r) - r * self.exceed[i] - r * self.integral(i, g))
            .collect()
    }

    /// Iterate T_r until the a-posteriori bound c delta / (1 - c) <= tol.
    pub fn solve(&self, r: f64, tol: f64) -> Result<HSolution> {
        check_r(r)?;
        if !(tol > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        let c = self.contraction_coefficient(r);
        let mut g = vec![r / (1.0 - r); self.grid.len()];
        let mut deltas = Vec::new();
        let mut iterations = 0;
        loop {
            let next = self.apply_t_continuous(r, &g);
            let delta = next
                .iter()
                .zip(&g)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            g = next;
            iterations += 1;
            deltas.push(delta);
            if c * delta / (1.0 - c) <= tol || delta == 0.0 {
                break;
            }
            if iterations >= MAX_ITERATIONS {
                return Err(Error::NumericalIntegrity(format!(
                    "no convergence after {MAX_ITERATIONS} iterations (delta {delta:e})"
                )));
            }
        }
        let delta = *deltas.last().expect("at least one iteration");
        let g_sup = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let discretization = r.abs()
            * (self.interpolation_error(&g) * self.x_cdf.positive_prob()
                + self.quadrature_error() * g_sup
                + self.grid_tail * (g_sup + 1.0))
            / (1.0 - c);
        let certificate = c * delta / (1.0 - c) + discretization;
        let h = g.iter().zip(&self.w1_cdf).map(|(a, b)| a + b).collect();
        Ok(HSolution {
            r,
            x: self.grid.clone(),
            g,
            h,
            certificate,
            iterations,
            deltas,
            contraction_coefficient: c,
            w1: self.w1.clone(),
        })
    }

    /// max over nodes of h^2/8 |G''| with G'' from second divided differences.
    fn interpolation_error(&self, g: &[f64]) -> f64 {
        let x = &self.grid;
        (1..x.len() - 1)
            .map(|m| {
                let h0 = x[m] - x[m - 1];
                let h1 = x[m + 1] - x[m];
                let second = 2.0 * ((g[m + 1] - g[m]) / h1 - (g[m] - g[m - 1]) / h0) / (h0 + h1);
                h0.max(h1).powi(2) / 8.0 * second.abs()
            })
            .fold(0.0, f64::max)
    }

    /// Largest residual of h = f_W1 + r H(0) f_X + r int h(u) f_X(u + x) du
    /// with h = dH/dx from finite differences, over interior nodes. `None`
    /// when W1 has no density on (0, inf).
    pub fn wiener_hopf_residual(&self, sol: &HSolution) -> Option<f64> {
        let x = &self.grid;
        let n = x.len();
        let f_w1: Vec<f64> = x.iter().map(|&v| self.w1.density(v)).collect::<Option<_>>()?;
        let mut g_prime = vec![0.0; n];
        for m in 1..n - 1 {
            let h0 = x[m] - x[m - 1];
            let h1 = x[m + 1] - x[m];
            g_prime[m] = (h0 * h0 * (sol.g[m + 1] - sol.g[m]) + h1 * h1 * (sol.g[m] - sol.g[m - 1]))
                / (h0 * h1 * (h0 + h1));
        }
        g_prime[0] = (sol.g[1] - sol.g[0]) / (x[1] - x[0]);
        g_prime[n - 1] = 0.0;
        let h: Vec<f64> = g_prime.iter().zip(&f_w1).map(|(a, b)| a + b).collect();
        let h0 = sol.h[0];
        let lo = x.partition_point(|&v| v < 0.05 * x[n - 1]);
        let hi = x.partition_point(|&v| v < 0.5 * x[n - 1]);
        Some(
            (lo..hi)
                .map(|i| {
                    let rhs = f_w1[i]
                        + sol.r * h0 * self.x_cdf.density(x[i])
                        + sol.r * self.integral(i, &h);
                    (h[i] - rhs).abs()
                })
                .fold(0.0, f64::max),
        )
    }
}

fn check_r(r: f64) -> Result<()> {
    if !(r.is_finite() && r.abs() < 1.0) {
        return Err(Error::invalid(format!("need |r| < 1, got {r}")));
    }
    Ok(())
}

/// Hat-function quadrature of f_X(u + x) over the grid, with a trapezoid
/// rule on 16 panels per interval (Richardson-corrected against 8 panels),
/// plus the constant extension beyond the cut-off node.
fn quadrature_row(x_cdf: &XCdf, grid: &[f64], x: f64) -> Row {
    let mut weights = vec![0.0; grid.len()];
    let mut error = 0.0;
    let mut cut = grid.len() - 1;
    for m in 0..grid.len() - 1 {
        if x_cdf.tail(grid[m] + x) < ROW_CUTOFF {
            cut = m;
            break;
        }
        let (u0, u1) = (grid[m], grid[m + 1]);
        let h = u1 - u0;
        let mut fine = [0.0; 2];
        let mut coarse = [0.0; 2];
        for s in 0..=PANELS {
            let t = s as f64 / PANELS as f64;
            let f = x_cdf.density(u0 + t * h + x);
            let end = if s == 0 || s == PANELS { 0.5 } else { 1.0 };
            let parts = [(1.0 - t) * f, t * f];
            for k in 0..2 {
                fine[k] += end * parts[k];
                if s % 2 == 0 {
                    coarse[k] += end * parts[k];
                }
            }
        }
        for k in 0..2 {
            let t16 = fine[k] * h / PANELS as f64;
            let t8 = coarse[k] * h / (PANELS / 2) as f64;
            weights[m + k] += t16 + (t16 - t8) / 3.0;
            error += (t16 - t8).abs() / 3.0;
        }
    }
    weights[cut] += x_cdf.tail(grid[cut] + x);
    weights.truncate(cut + 1);
    Row { weights, error }
}

/// Solved H(r, .) on the grid with its certified sup-norm error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HSolution {
    pub r: f64,
    pub x: Vec<f64>,
    /// H - P[W1 <= .] at the nodes
    pub g: Vec<f64>,
    /// H at the nodes
    pub h: Vec<f64>,
    pub certificate: f64,
    pub iterations: usize,
    /// sup-distance between successive iterates
    pub deltas: Vec<f64>,
    pub contraction_coefficient: f64,
    pub w1: W1Law,
}

impl HSolution {
    /// H(r, x) at any x >= 0.
    pub fn eval(&self, x: f64) -> f64 {
        interpolate(&self.x, &self.g, x) + self.w1.cdf(x)
    }

    pub fn grid_fn(&self) -> GridFn {
        GridFn {
            r: self.r,
            x: self.x.clone(),
            values: self.h.clone(),
        }
    }

    /// Ratios delta_{k+1} / delta_k while the distances are above
    /// rounding level.
    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.deltas
            .windows(2)
            .take_while(|w| w[1] > 1e-11 * (1.0 + self.r.abs() / (1.0 - self.r)))
            .map(|w| w[1] / w[0])
            .collect()
    }

    /// P[W_{G+1} <= x] = (1 - r) H(r, x) for geometric G, made monotone.
    /// Fails if monotone clamping moves a value by more than the
    /// certificate.
    pub fn tilted_cdf(&self) -> Result<GridFn> {
        tilted_cdf_estimate(self)
    }

    pub fn to_table(&self, xs: &[f64]) -> Table {
        let mut t = Table::new(&["r", "x", "H", "certificate"]);
        for &x in xs {
            t.push(vec![
                Value::Float(self.r),
                Value::Float(x),
                Value::Float(self.eval(x)),
                Value::Float(self.certificate),
            ]);
        }
        t
    }
}

pub fn tilted_cdf_estimate(sol: &HSolution) -> Result<GridFn> {
    if !(0.0..1.0).contains(&sol.r) {
        return Err(Error::invalid("the tilted CDF needs r in [0, 1)"));
    }
    let allowed = (1.0 - sol.r) * sol.certificate + 1e-12;
    let mut running: f64 = 0.0;
    let mut values = Vec::with_capacity(sol.h.len());
    for (&x, &h) in sol.x.iter().zip(&sol.h) {
        let raw = (1.0 - sol.r) * h;
        let clamped = raw.max(running).clamp(0.0, 1.0);
        if (clamped - raw).abs() > allowed {
            return Err(Error::NumericalIntegrity(format!(
                "grid defect: tilted CDF at x = {x} moved by {:e} when made monotone",
                (clamped - raw).abs()
            )));
        }
        running = clamped;
        values.push(clamped);
    }
    Ok(GridFn {
        r: sol.r,
        x: sol.x.clone(),
        values,
    })
}
