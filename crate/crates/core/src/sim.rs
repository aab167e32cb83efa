//! Seeded Monte Carlo simulator of the alternating recursion and of
//! Lindley's recursion, used as the independent oracle for every analytic
//! engine.
//!
//! Replication `r` draws from the ChaCha8 stream `r` of the configured seed,
//! so results are a pure function of `(seed, config)` regardless of how the
//! work is spread across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{ServiceTimeModel, TimeLaw};
use crate::error::{Error, Result};
use crate::initial::InitialCondition;
use crate::output::{Table, Value};
use crate::stats::{covariance_batch_means, SimEstimate};

/// Replications handled by one parallel work unit.
const BLOCK: usize = 4096;
/// Batches used for covariance standard errors.
pub const COVARIANCE_BATCHES: usize = 32;
/// Fewest replications accepted by the covariance estimator.
pub const MIN_COVARIANCE_REPLICATIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecursionKind {
    /// W[n+1] = max(0, B[n+1] - A[n] - W[n])
    Alternating,
    /// W[n+1] = max(0, B[n+1] - A[n] + W[n])
    Lindley,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub kind: RecursionKind,
    pub service: ServiceTimeModel,
    pub prep: TimeLaw,
    pub initial: InitialCondition,
    /// Number of waiting times per path, W1..W_horizon.
    pub horizon: usize,
    pub replications: usize,
    pub seed: u64,
    /// Points at which empirical CDFs are evaluated.
    pub x_grid: Vec<f64>,
    /// Steps run from W = 0 before W1 is recorded when the initial
    /// condition is `Stationary`.
    pub burn_in: usize,
    /// Largest number of waiting times `simulate_paths` may materialise.
    pub memory_budget: usize,
}

impl SimConfig {
    pub fn new(kind: RecursionKind, service: ServiceTimeModel, prep: impl Into<TimeLaw>) -> Self {
        Self {
            kind,
            service,
            prep: prep.into(),
            initial: InitialCondition::zero(),
            horizon: 2,
            replications: 10_000,
            seed: 0,
            x_grid: vec![0.0],
            burn_in: 64,
            memory_budget: 1 << 26,
        }
    }

    pub fn initial(mut self, initial: InitialCondition) -> Self {
        self.initial = initial;
        self
    }

    pub fn horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn replications(mut self, replications: usize) -> Self {
        self.replications = replications;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn x_grid(mut self, x_grid: Vec<f64>) -> Self {
        self.x_grid = x_grid;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.service.validate()?;
        if self.horizon < 2 {
            return Err(Error::invalid("simulation horizon must be at least 2"));
        }
        if self.replications < 1 {
            return Err(Error::invalid("need at least one replication"));
        }
        if self.x_grid.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::invalid("x-grid must be finite and nonnegative"));
        }
        if self.x_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("x-grid must be strictly increasing"));
        }
        if let InitialCondition::Fixed(w) = self.initial {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::invalid(format!("fixed w1 must be nonnegative, got {w}")));
            }
        }
        Ok(())
    }

    fn step(&self, w: f64, rng: &mut ChaCha8Rng) -> f64 {
        let a = self.service.sample(rng);
        let b = self.prep.sample(rng);
        let v = match self.kind {
            RecursionKind::Alternating => b - a - w,
            RecursionKind::Lindley => b - a + w,
        };
        // max(0, v) that yields the literal zero used for regeneration tests
        if v > 0.0 {
            v
        } else {
            0.0
        }
    }

    fn first_wait(&self, rng: &mut ChaCha8Rng) -> f64 {
        match &self.initial {
            InitialCondition::Fixed(w) => *w,
            InitialCondition::EqualsB1 => self.prep.sample(rng),
            InitialCondition::Law(law) => law.sample(rng),
            InitialCondition::Stationary => {
                let mut w = 0.0;
                for _ in 0..self.burn_in {
                    w = self.step(w, rng);
                }
                w
            }
        }
    }

    /// Fills `out` with W1, W2, ... for replication `r`.
    fn fill_path(&self, r: usize, out: &mut [f64]) {
        let mut rng = replication_rng(self.seed, r as u64);
        let mut w = self.first_wait(&mut rng);
        out[0] = w;
        for slot in out.iter_mut().skip(1) {
            w = self.step(w, &mut rng);
            *slot = w;
        }
    }

    /// Runs `f` over every replication path of length `len`, in parallel
    /// blocks, and returns the per-block results in replication order.
    fn map_blocks<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(std::ops::Range<usize>, &mut dyn FnMut(usize) -> Vec<f64>) -> T + Sync,
    {
        let reps = self.replications;
        let blocks = reps.div_ceil(BLOCK);
        (0..blocks)
            .into_par_iter()
            .map(|b| {
                let range = b * BLOCK..((b + 1) * BLOCK).min(reps);
                let mut path = |r: usize| {
                    let mut buf = vec![0.0; len];
                    self.fill_path(r, &mut buf);
                    buf
                };
                f(range, &mut path)
            })
            .collect()
    }
}

/// The random stream owned by replication `r`.
pub fn replication_rng(seed: u64, r: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r);
    rng
}

/// Waiting times `W[replication][step]`, step 0 holding W1.
pub fn simulate_paths(cfg: &SimConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let needed = cfg.replications.saturating_mul(cfg.horizon);
    if needed > cfg.memory_budget {
        return Err(Error::Capacity(format!(
            "{needed} waiting times exceed the budget of {}; use the streaming estimators",
            cfg.memory_budget
        )));
    }
    let blocks = cfg.map_blocks(cfg.horizon, |range, path| {
        range.map(path).collect::<Vec<_>>()
    });
    Ok(blocks.into_iter().flatten().collect())
}

/// Empirical CDF of W_n on the configured grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCdf {
    pub n: usize,
    pub x: Vec<f64>,
    pub cdf: Vec<SimEstimate>,
}

impl SimCdf {
    pub fn to_table(cdfs: &[SimCdf]) -> Table {
        let mut t = Table::new(&["n", "x", "cdf", "stderr"]);
        for c in cdfs {
            for (x, e) in c.x.iter().zip(&c.cdf) {
                t.push(vec![
                    Value::Int(c.n as i64),
                    Value::Float(*x),
                    Value::Float(e.value),
                    Value::Float(e.stderr),
                ]);
            }
        }
        t
    }
}

/// P̂[W_n <= x] at every grid point.
pub fn estimate_transient_cdf(cfg: &SimConfig, n: usize) -> Result<SimCdf> {
    Ok(estimate_transient_cdfs(cfg, &[n])?.remove(0))
}

/// Empirical CDFs for several steps from a single pass over the paths.
pub fn estimate_transient_cdfs(cfg: &SimConfig, ns: &[usize]) -> Result<Vec<SimCdf>> {
    cfg.validate()?;
    for &n in ns {
        if n < 1 || n > cfg.horizon {
            return Err(Error::invalid(format!(
                "step {n} is outside 1..={}",
                cfg.horizon
            )));
        }
    }
    let len = ns.iter().copied().max().unwrap_or(1);
    let gx = cfg.x_grid.len();
    let blocks = cfg.map_blocks(len, |range, path| {
        let mut counts = vec![0u64; ns.len() * gx];
        for r in range {
            let p = path(r);
            for (i, &n) in ns.iter().enumerate() {
                let w = p[n - 1];
                for (j, &x) in cfg.x_grid.iter().enumerate() {
                    if w <= x {
                        counts[i * gx + j] += 1;
                    }
                }
            }
        }
        counts
    });
    let mut totals = vec![0u64; ns.len() * gx];
    for b in blocks {
        for (t, c) in totals.iter_mut().zip(b) {
            *t += c;
        }
    }
    Ok(ns
        .iter()
        .enumerate()
        .map(|(i, &n)| SimCdf {
            n,
            x: cfg.x_grid.clone(),
            cdf: (0..gx)
                .map(|j| SimEstimate::proportion(totals[i * gx + j], cfg.replications))
                .collect(),
        })
        .collect())
}

/// Sample mean of W_n with its standard error.
pub fn estimate_mean(cfg: &SimConfig, n: usize) -> Result<SimEstimate> {
    cfg.validate()?;
    if n < 1 || n > cfg.horizon {
        return Err(Error::invalid(format!("step {n} is outside 1..={}", cfg.horizon)));
    }
    let values: Vec<f64> = cfg
        .map_blocks(n, |range, path| range.map(|r| path(r)[n - 1]).collect::<Vec<_>>())
        .into_iter()
        .flatten()
        .collect();
    let m = crate::stats::mean(&values);
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() as f64 - 1.0)
    } else {
        0.0
    };
    Ok(SimEstimate {
        value: m,
        stderr: (var / values.len() as f64).sqrt(),
        replications: values.len(),
    })
}

/// Sample covariance of (W_n, W_{n+k}) across replications.
pub fn estimate_covariance(cfg: &SimConfig, n: usize, k: usize) -> Result<SimEstimate> {
    Ok(estimate_covariances(cfg, n, &[k])?.remove(0))
}

/// Covariances at several lags from one pass; standard errors by batch means.
pub fn estimate_covariances(cfg: &SimConfig, n: usize, ks: &[usize]) -> Result<Vec<SimEstimate>> {
    cfg.validate()?;
    if cfg.replications < MIN_COVARIANCE_REPLICATIONS {
        return Err(Error::InsufficientReplications {
            required: MIN_COVARIANCE_REPLICATIONS,
            got: cfg.replications,
        });
    }
    let kmax = ks.iter().copied().max().unwrap_or(0);
    if n < 1 || n + kmax > cfg.horizon {
        return Err(Error::invalid(format!(
            "steps {n}..={} are outside 1..={}",
            n + kmax,
            cfg.horizon
        )));
    }
    let len = n + kmax;
    let needed = cfg.replications.saturating_mul(len);
    if needed > cfg.memory_budget {
        return Err(Error::Capacity(format!(
            "{needed} waiting times exceed the budget of {}",
            cfg.memory_budget
        )));
    }
    let rows: Vec<Vec<f64>> = cfg
        .map_blocks(len, |range, path| {
            range.map(|r| path(r)[n - 1..].to_vec()).collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect();
    let base: Vec<f64> = rows.iter().map(|row| row[0]).collect();
    Ok(ks
        .iter()
        .map(|&k| {
            let lagged: Vec<f64> = rows.iter().map(|row| row[k]).collect();
            covariance_batch_means(&base, &lagged, COVARIANCE_BATCHES)
        })
        .collect())
}

pub fn covariance_table(ks: &[usize], est: &[SimEstimate]) -> Table {
    let mut t = Table::new(&["k", "cov", "stderr"]);
    for (k, e) in ks.iter().zip(est) {
        t.push(vec![
            Value::Int(*k as i64),
            Value::Float(e.value),
            Value::Float(e.stderr),
        ]);
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CycleMode {
    /// One long path restarted at every regeneration.
    LongPath,
    /// Cycle i is drawn from its own random stream.
    Independent,
}

/// Counts of cycle lengths 1..=n_cap plus the overflow beyond n_cap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleHistogram {
    /// counts[c - 1] = number of cycles of length c
    pub counts: Vec<u64>,
    pub overflow: u64,
    pub total: u64,
}

impl CycleHistogram {
    fn new(n_cap: usize) -> Self {
        Self {
            counts: vec![0; n_cap],
            overflow: 0,
            total: 0,
        }
    }

    fn record(&mut self, len: usize) {
        if len <= self.counts.len() {
            self.counts[len - 1] += 1;
        } else {
            self.overflow += 1;
        }
        self.total += 1;
    }

    fn merge(&mut self, other: &CycleHistogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.overflow += other.overflow;
        self.total += other.total;
    }

    pub fn n_cap(&self) -> usize {
        self.counts.len()
    }

    /// P̂[C = c] with binomial standard error.
    pub fn estimate(&self, c: usize) -> SimEstimate {
        let hits = if c >= 1 && c <= self.counts.len() {
            self.counts[c - 1]
        } else {
            0
        };
        SimEstimate::proportion(hits, self.total as usize)
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["c", "count", "prob"]);
        for (i, &count) in self.counts.iter().enumerate() {
            t.push(vec![
                Value::Int(i as i64 + 1),
                Value::Int(count as i64),
                Value::Float(count as f64 / self.total as f64),
            ]);
        }
        t
    }
}

/// Runs cycles starting from W = 0 until W returns to exactly 0; a cycle
/// longer than `n_cap` is counted as overflow and the path restarts at 0.
fn run_cycle(cfg: &SimConfig, rng: &mut ChaCha8Rng, n_cap: usize) -> usize {
    let mut w = 0.0;
    let mut len = 0;
    loop {
        w = cfg.step(w, rng);
        len += 1;
        if w == 0.0 || len > n_cap {
            return len;
        }
    }
}

/// Histogram of regeneration cycle lengths C = inf{n >= 1 : W[n+1] = 0 | W1 = 0}.
pub fn estimate_cycle_distribution(
    cfg: &SimConfig,
    n_cap: usize,
    cycles: u64,
    mode: CycleMode,
) -> Result<CycleHistogram> {
    cfg.validate()?;
    if !cfg.initial.is_zero() {
        return Err(Error::invalid("cycle estimation starts from W1 = 0"));
    }
    if n_cap < 1 || cycles < 1 {
        return Err(Error::invalid("need n_cap >= 1 and at least one cycle"));
    }
    let p0 = cfg.prep.prob_not_exceeding(&cfg.service)?;
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::Regeneration(p0));
    }
    match mode {
        CycleMode::LongPath => {
            let mut rng = replication_rng(cfg.seed, 0);
            let mut h = CycleHistogram::new(n_cap);
            for _ in 0..cycles {
                h.record(run_cycle(cfg, &mut rng, n_cap));
            }
            Ok(h)
        }
        CycleMode::Independent => {
            let blocks = (cycles as usize).div_ceil(BLOCK);
            let parts: Vec<CycleHistogram> = (0..blocks)
                .into_par_iter()
                .map(|b| {
                    let mut h = CycleHistogram::new(n_cap);
                    for i in b * BLOCK..((b + 1) * BLOCK).min(cycles as usize) {
                        let mut rng = replication_rng(cfg.seed, i as u64);
                        h.record(run_cycle(cfg, &mut rng, n_cap));
                    }
                    h
                })
                .collect();
            let mut h = CycleHistogram::new(n_cap);
            for p in &parts {
                h.merge(p);
            }
            Ok(h)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::PrepTimeModel;

    fn det(v: f64) -> ServiceTimeModel {
        ServiceTimeModel::deterministic(v).unwrap()
    }

    #[test]
    fn deterministic_alternating_examples() {
        let cfg = SimConfig::new(RecursionKind::Alternating, det(10.0), det(1.0))
            .initial(InitialCondition::Fixed(5.0))
            .horizon(3)
            .replications(1);
        let paths = simulate_paths(&cfg).unwrap();
        assert_eq!(paths[0][1], 0.0);

        let cfg = SimConfig::new(RecursionKind::Alternating, det(0.0), det(1.0))
            .horizon(6)
            .replications(2);
        let paths = simulate_paths(&cfg).unwrap();
        assert_eq!(paths[1], vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn deterministic_lindley_grows_linearly() {
        let cfg = SimConfig::new(RecursionKind::Lindley, det(1.0), det(2.0))
            .horizon(8)
            .replications(1);
        let paths = simulate_paths(&cfg).unwrap();
        let expect: Vec<f64> = (0..8).map(|n| n as f64).collect();
        assert_eq!(paths[0], expect);
    }

    #[test]
    fn memory_budget_is_enforced() {
        let mut cfg = SimConfig::new(RecursionKind::Alternating, det(1.0), det(1.0))
            .horizon(100)
            .replications(1000);
        cfg.memory_budget = 10_000;
        assert!(matches!(simulate_paths(&cfg), Err(Error::Capacity(_))));
        // the streaming estimators are not bounded by the budget
        assert!(estimate_transient_cdf(&cfg, 100).is_ok());
        assert!(matches!(estimate_covariances(&cfg, 1, &[50]), Err(Error::Capacity(_))));
    }

    #[test]
    fn paths_are_reproducible_and_nonnegative() {
        let exp = ServiceTimeModel::exponential(1.0).unwrap();
        let prep = PrepTimeModel::erlang(2, 1.5).unwrap();
        let cfg = SimConfig::new(RecursionKind::Alternating, exp, prep)
            .initial(InitialCondition::EqualsB1)
            .horizon(20)
            .replications(5000)
            .seed(11);
        let a = simulate_paths(&cfg).unwrap();
        let b = simulate_paths(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().flatten().all(|&w| w >= 0.0));
    }

    #[test]
    fn covariance_needs_enough_replications() {
        let exp = ServiceTimeModel::exponential(1.0).unwrap();
        let cfg = SimConfig::new(RecursionKind::Alternating, exp.clone(), exp)
            .horizon(5)
            .replications(999);
        assert!(matches!(
            estimate_covariance(&cfg, 2, 1),
            Err(Error::InsufficientReplications { .. })
        ));
    }

    #[test]
    fn lag_zero_covariance_is_sample_variance() {
        let exp = ServiceTimeModel::exponential(1.0).unwrap();
        let cfg = SimConfig::new(RecursionKind::Alternating, exp.clone(), PrepTimeModel::exponential(1.0).unwrap())
            .horizon(4)
            .replications(2000)
            .seed(3);
        let cov0 = estimate_covariance(&cfg, 3, 0).unwrap();
        let paths = simulate_paths(&cfg).unwrap();
        let xs: Vec<f64> = paths.iter().map(|p| p[2]).collect();
        assert!((cov0.value - crate::stats::covariance(&xs, &xs)).abs() < 1e-15);
    }

    #[test]
    fn cycle_estimation_rejects_degenerate_inputs() {
        let cfg = SimConfig::new(RecursionKind::Alternating, det(0.0), PrepTimeModel::exponential(1.0).unwrap());
        assert!(matches!(
            estimate_cycle_distribution(&cfg, 10, 100, CycleMode::LongPath),
            Err(Error::Regeneration(_))
        ));
        let exp = ServiceTimeModel::exponential(1.0).unwrap();
        let cfg = SimConfig::new(RecursionKind::Alternating, exp, PrepTimeModel::exponential(1.0).unwrap())
            .initial(InitialCondition::Fixed(1.0));
        assert!(estimate_cycle_distribution(&cfg, 10, 100, CycleMode::LongPath).is_err());
    }

    #[test]
    fn cycle_histogram_accounts_for_every_cycle() {
        let exp = ServiceTimeModel::exponential(1.0).unwrap();
        let cfg = SimConfig::new(RecursionKind::Alternating, exp, PrepTimeModel::exponential(1.0).unwrap());
        for mode in [CycleMode::LongPath, CycleMode::Independent] {
            let h = estimate_cycle_distribution(&cfg, 3, 20_000, mode).unwrap();
            assert_eq!(h.counts.iter().sum::<u64>() + h.overflow, h.total);
            assert_eq!(h.total, 20_000);
        }
    }
}
