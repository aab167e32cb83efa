//! Mixed-Erlang preparation times through the remaining-phase chain.
//!
//! F_n is the number of exponential phases of the preparation time still
//! outstanding when the server starts waiting at step n, so W_n given
//! F_n = i is Erlang(i, mu) and F_0 = 0 is the atom at zero. A fresh
//! preparation time needs K phases with probability q_K.
//!
//! Laws over states are row vectors and propagate as pi_n = pi_{n-1} P,
//! which is the orientation that keeps them probability vectors.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::distributions::{MixedErlangLaw, PrepTimeModel, ServiceTimeModel};
use crate::error::{Error, Result};
use crate::initial::InitialCondition;
use crate::numeric::{compensated_sum, erlang_cdf, ln_binomial, ln_factorial, CompensatedSum};
use crate::output::{Table, Value};

/// Tolerance for entries that are probabilities up to rounding.
const ENTRY_SLACK: f64 = 1e-9;

pub type MixedErlangWaitingDist = MixedErlangLaw;

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseChain {
    prep: PrepTimeModel,
    service: ServiceTimeModel,
    /// counts[m] = P[exactly m phases expire during A], m < N
    counts: Vec<f64>,
    p: DMatrix<f64>,
}

/// P[l phases of rate mu expire during an Erlang(i, mu) time] for i >= 1:
/// a negative binomial count, C(i+l-1, i-1) / 2^{i+l}.
fn erlang_count(i: usize, l: usize) -> f64 {
    (ln_binomial(i + l - 1, i - 1) - (i + l) as f64 * std::f64::consts::LN_2).exp()
}

/// P[exactly m phases expire during A + W] with W ~ Erlang(i, mu).
fn delayed_count(counts: &[f64], i: usize, m: usize) -> f64 {
    if i == 0 {
        return counts.get(m).copied().unwrap_or(0.0);
    }
    compensated_sum(
        (0..=m)
            .filter(|&l| m - l < counts.len())
            .map(|l| counts[m - l] * erlang_count(i, l)),
    )
}

/// Build the remaining-phase chain for preparation law `prep` and service
/// law `service`.
pub fn build_chain(prep: &PrepTimeModel, service: &ServiceTimeModel) -> Result<PhaseChain> {
    service.validate()?;
    let mu = prep.rate();
    let n = prep.max_phases();
    let counts: Vec<f64> = (0..n).map(|m| service.phase_count_prob(m, mu)).collect();
    let mut chain = PhaseChain {
        prep: prep.clone(),
        service: service.clone(),
        counts,
        p: DMatrix::zeros(n + 1, n + 1),
    };
    for i in 0..=n {
        let row = chain.transition_row(i)?;
        for (j, v) in row.into_iter().enumerate() {
            chain.p[(i, j)] = v;
        }
    }
    if !(chain.p[(0, 0)] > 0.0 && chain.p[(0, 0)] < 1.0) {
        return Err(Error::Regeneration(chain.p[(0, 0)]));
    }
    let q_row_max = (1..=n)
        .map(|i| (1..=n).map(|j| chain.p[(i, j)]).sum::<f64>())
        .fold(0.0, f64::max);
    if q_row_max >= 1.0 {
        return Err(Error::NumericalIntegrity(format!(
            "taboo matrix has a row sum of {q_row_max}; cycles would not terminate"
        )));
    }
    Ok(chain)
}

impl PhaseChain {
    /// Number of phases N of the largest preparation component.
    pub fn phases(&self) -> usize {
        self.prep.max_phases()
    }

    pub fn mu(&self) -> f64 {
        self.prep.rate()
    }

    pub fn prep(&self) -> &PrepTimeModel {
        &self.prep
    }

    pub fn service(&self) -> &ServiceTimeModel {
        &self.service
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn p(&self, i: usize, j: usize) -> f64 {
        self.p[(i, j)]
    }

    /// Row 0 of P without its first entry.
    pub fn q(&self) -> Vec<f64> {
        (1..=self.phases()).map(|j| self.p[(0, j)]).collect()
    }

    /// P restricted to states 1..=N.
    pub fn taboo(&self) -> DMatrix<f64> {
        self.p.view((1, 1), (self.phases(), self.phases())).into_owned()
    }

    /// Transition probabilities out of a state with `i` remaining phases.
    /// Valid for any i, including those above N (used by initial laws).
    pub fn transition_row(&self, i: usize) -> Result<Vec<f64>> {
        let n = self.phases();
        let mut row = vec![0.0; n + 1];
        for (j, slot) in row.iter_mut().enumerate().skip(1) {
            *slot = compensated_sum(
                (j..=n).map(|k| self.prep.phase_weight(k) * delayed_count(&self.counts, i, k - j)),
            );
        }
        let p0 = 1.0 - compensated_sum(row[1..].iter().copied());
        row[0] = p0;
        if row.iter().any(|&v| !(-ENTRY_SLACK..=1.0 + ENTRY_SLACK).contains(&v)) {
            return Err(Error::NumericalIntegrity(format!(
                "transition row {i} has entries outside [0, 1]: {row:?}"
            )));
        }
        Ok(row.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    /// One propagation step pi -> pi P.
    pub fn step(&self, law: &PhaseLaw) -> PhaseLaw {
        PhaseLaw {
            weights: self.left_multiply(&law.weights),
        }
    }

    fn left_multiply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.phases();
        (0..=n)
            .map(|j| compensated_sum((0..=n).map(|i| v[i] * self.p[(i, j)])))
            .collect()
    }

    /// Law of F_2 given W1 = w1.
    pub fn initial_phase_law(&self, w1: f64) -> Result<PhaseLaw> {
        if !(w1.is_finite() && w1 >= 0.0) {
            return Err(Error::invalid(format!("w1 must be nonnegative, got {w1}")));
        }
        let poly = self.w2_poly();
        PhaseLaw::new(poly.eval_all(w1))
    }

    /// Law of F_2 given W1 = w as constant + e^{-mu w} * polynomial(w).
    fn w2_poly(&self) -> PolyExpFn {
        let n = self.phases();
        let mu = self.mu();
        // mu^l / l!
        let scale: Vec<f64> = (0..n)
            .map(|l| (l as f64 * mu.ln() - ln_factorial(l)).exp())
            .collect();
        let mut constant = vec![0.0; n + 1];
        constant[0] = 1.0;
        let mut coeffs = vec![vec![0.0; n]; n + 1];
        for j in 1..=n {
            for (l, s) in scale.iter().enumerate().take(n - j + 1) {
                coeffs[j][l] = s * compensated_sum(
                    (j + l..=n).map(|k| self.prep.phase_weight(k) * self.counts[k - j - l]),
                );
            }
        }
        for l in 0..n {
            coeffs[0][l] = -compensated_sum((1..=n).map(|j| coeffs[j][l]));
        }
        PolyExpFn {
            mu,
            constant,
            coeffs,
        }
    }

    /// Law of F_1 when W1 is mixed-Erlang with rate mu; `None` for a fixed
    /// w1 > 0.
    pub fn first_phase_law(&self, initial: &InitialCondition) -> Result<Option<Vec<f64>>> {
        Ok(match initial {
            InitialCondition::Fixed(w) if *w > 0.0 => None,
            InitialCondition::Fixed(_) => Some(unit(0, self.phases() + 1)),
            InitialCondition::EqualsB1 => {
                let mut v = vec![0.0];
                v.extend(
                    (1..=self.phases()).map(|k| self.prep.phase_weight(k)),
                );
                Some(v)
            }
            InitialCondition::Stationary => Some(self.stationary_law()?.weights),
            InitialCondition::Law(law) => {
                if (law.rate() - self.mu()).abs() > 1e-12 * self.mu() {
                    return Err(Error::invalid(format!(
                        "initial law rate {} differs from the preparation rate {}",
                        law.rate(),
                        self.mu()
                    )));
                }
                Some(law.weights().to_vec())
            }
        })
    }

    /// Law of F_2 for any initial condition.
    pub fn second_phase_law(&self, initial: &InitialCondition) -> Result<PhaseLaw> {
        if let InitialCondition::Fixed(w) = initial {
            return self.initial_phase_law(*w);
        }
        let first = self.first_phase_law(initial)?.expect("mixed-Erlang initial law");
        let n = self.phases();
        let mut acc = vec![CompensatedSum::new(); n + 1];
        for (i, &wi) in first.iter().enumerate() {
            if wi == 0.0 {
                continue;
            }
            let row = if i <= n {
                self.p.row(i).iter().copied().collect()
            } else {
                self.transition_row(i)?
            };
            for (a, r) in acc.iter_mut().zip(row) {
                a.add(wi * r);
            }
        }
        PhaseLaw::new(acc.iter().map(CompensatedSum::value).collect())
    }

    /// Law of F_n, n >= 1.
    pub fn phase_law_at(&self, initial: &InitialCondition, n: usize) -> Result<PhaseLaw> {
        match n {
            0 => Err(Error::invalid("steps are numbered from 1")),
            1 => match self.first_phase_law(initial)? {
                Some(w) if w.len() <= self.phases() + 1 => PhaseLaw::new(w),
                _ => Err(Error::invalid(
                    "W1 is not a mixed-Erlang law on the chain's states",
                )),
            },
            _ => {
                let mut law = self.second_phase_law(initial)?;
                for _ in 2..n {
                    law = self.step(&law);
                }
                law.check()?;
                Ok(law)
            }
        }
    }

    /// Laws of F_2..=F_n_max from one propagation.
    pub fn phase_laws(&self, initial: &InitialCondition, n_max: usize) -> Result<Vec<PhaseLaw>> {
        let mut out = Vec::with_capacity(n_max.saturating_sub(1));
        if n_max < 2 {
            return Ok(out);
        }
        let mut law = self.second_phase_law(initial)?;
        out.push(law.clone());
        for _ in 3..=n_max {
            law = self.step(&law);
            law.check()?;
            out.push(law.clone());
        }
        Ok(out)
    }

    /// Law of W_n as an atom plus mixed Erlang.
    pub fn waiting_law(&self, initial: &InitialCondition, n: usize) -> Result<MixedErlangWaitingDist> {
        if n == 1 {
            if let Some(w) = self.first_phase_law(initial)? {
                return MixedErlangLaw::new(self.mu(), w);
            }
        }
        self.phase_law_at(initial, n)?.to_waiting_dist(self.mu())
    }

    /// P[W_n <= x].
    pub fn transient_cdf(&self, initial: &InitialCondition, n: usize, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Ok(0.0);
        }
        if n == 1 {
            if let InitialCondition::Fixed(w) = initial {
                return Ok(if x >= *w { 1.0 } else { 0.0 });
            }
        }
        Ok(self.waiting_law(initial, n)?.cdf(x))
    }

    /// E[W_n].
    pub fn mean(&self, initial: &InitialCondition, n: usize) -> Result<f64> {
        if n == 1 {
            if let InitialCondition::Fixed(w) = initial {
                return Ok(*w);
            }
        }
        Ok(self.waiting_law(initial, n)?.mean())
    }

    /// Stationary law of {F_n}: the solution of pi = pi P, sum pi = 1.
    pub fn stationary_law(&self) -> Result<PhaseLaw> {
        let size = self.phases() + 1;
        let mut a = self.p.transpose() - DMatrix::identity(size, size);
        for j in 0..size {
            a[(size - 1, j)] = 1.0;
        }
        let mut b = nalgebra::DVector::zeros(size);
        b[size - 1] = 1.0;
        let x = a.lu().solve(&b).ok_or_else(|| {
            Error::NumericalIntegrity("stationary equations are singular".into())
        })?;
        PhaseLaw::new(x.iter().copied().collect())
    }

    /// P[C = n] for the regeneration cycle started from W1 = 0.
    pub fn cycle_pmf(&self, n: usize) -> Result<f64> {
        Ok(*self.cycle_pmfs(n)?.last().expect("n >= 1"))
    }

    /// P[C = 1..=n_max].
    pub fn cycle_pmfs(&self, n_max: usize) -> Result<Vec<f64>> {
        if n_max == 0 {
            return Err(Error::invalid("cycle lengths start at 1"));
        }
        let n = self.phases();
        let exit: Vec<f64> = (1..=n).map(|i| self.p[(i, 0)]).collect();
        let mut out = vec![self.p[(0, 0)]];
        let mut v = self.q();
        for _ in 2..=n_max {
            out.push(compensated_sum(v.iter().zip(&exit).map(|(a, b)| a * b)));
            v = self.taboo_step(&v);
        }
        Ok(out)
    }

    /// P[C > n] = q Q^{n-1} e.
    pub fn cycle_tail(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Ok(1.0);
        }
        let mut v = self.q();
        for _ in 1..n {
            v = self.taboo_step(&v);
        }
        Ok(compensated_sum(v))
    }

    fn taboo_step(&self, v: &[f64]) -> Vec<f64> {
        let n = self.phases();
        (1..=n)
            .map(|j| compensated_sum((1..=n).map(|i| v[i - 1] * self.p[(i, j)])))
            .collect()
    }

    /// P[F_{1+k} = i | W1 = w] as constant + e^{-mu w} * polynomial(w).
    pub fn conditional_phase_poly(&self, k: usize) -> Result<PolyExpFn> {
        if k == 0 {
            return Err(Error::invalid("lag must be at least 1"));
        }
        let mut poly = self.w2_poly();
        for _ in 1..k {
            poly = poly.propagate(&self.p);
        }
        Ok(poly)
    }

    /// E[W_{1+k} | W1 = w] = sum_i (i/mu) P[F_{1+k} = i | W1 = w].
    pub fn conditional_mean(&self, k: usize, w: f64) -> Result<f64> {
        let poly = self.conditional_phase_poly(k)?;
        let mu = self.mu();
        Ok(compensated_sum(
            poly.eval_all(w).iter().enumerate().map(|(i, p)| i as f64 / mu * p),
        ))
    }

    /// cov[W_n, W_{n+k}] for k >= 1.
    pub fn covariance(&self, initial: &InitialCondition, n: usize, k: usize) -> Result<f64> {
        if k == 0 {
            return Err(Error::invalid("covariance is defined here for lags k >= 1"));
        }
        if n == 1 {
            if let InitialCondition::Fixed(w) = initial {
                if *w > 0.0 {
                    return Ok(0.0);
                }
            }
        }
        let law = self.waiting_law(initial, n)?;
        let poly = self.conditional_phase_poly(k)?;
        let mu = self.mu();
        let mean_n = law.mean();
        let moments: Vec<f64> = (0..self.phases()).map(|j| moment_integral(&law, j)).collect();
        let product = compensated_sum((1..=self.phases()).map(|i| {
            let inner = poly.constant[i] * mean_n
                + compensated_sum(poly.coeffs[i].iter().zip(&moments).map(|(c, m)| c * m));
            i as f64 / mu * inner
        }));
        let mean_nk = self.mean(initial, n + k)?;
        Ok(product - mean_n * mean_nk)
    }

    /// var[W_n].
    pub fn variance(&self, initial: &InitialCondition, n: usize) -> Result<f64> {
        if n == 1 {
            if let InitialCondition::Fixed(_) = initial {
                return Ok(0.0);
            }
        }
        Ok(self.waiting_law(initial, n)?.variance())
    }

    /// Matrix dump with columns `i,j,p_ij`.
    pub fn matrix_table(&self) -> Table {
        let mut t = Table::new(&["i", "j", "p_ij"]);
        let size = self.phases() + 1;
        for i in 0..size {
            for j in 0..size {
                t.push(vec![
                    Value::Int(i as i64),
                    Value::Int(j as i64),
                    Value::Float(self.p[(i, j)]),
                ]);
            }
        }
        t
    }
}

fn unit(i: usize, len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[i] = 1.0;
    v
}

/// Probability vector over remaining-phase states 0..=N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseLaw {
    pub weights: Vec<f64>,
}

impl PhaseLaw {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let law = Self { weights };
        law.check()?;
        Ok(Self {
            weights: law.weights.into_iter().map(|w| w.max(0.0)).collect(),
        })
    }

    fn check(&self) -> Result<()> {
        if self.weights.iter().any(|&w| !(w >= -1e-12)) {
            return Err(Error::NumericalIntegrity(format!(
                "negative phase probability in {:?}",
                self.weights
            )));
        }
        let total = compensated_sum(self.weights.iter().copied());
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::NumericalIntegrity(format!(
                "phase law sums to {total}"
            )));
        }
        Ok(())
    }

    pub fn to_waiting_dist(&self, mu: f64) -> Result<MixedErlangWaitingDist> {
        MixedErlangLaw::new(mu, self.weights.clone())
    }

    /// Dump with columns `state,prob`.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["state", "prob"]);
        for (i, w) in self.weights.iter().enumerate() {
            t.push(vec![Value::Int(i as i64), Value::Float(*w)]);
        }
        t
    }
}

/// Per-state functions of w of the form `constant[i] + e^{-mu w} sum_j
/// coeffs[i][j] w^j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyExpFn {
    pub mu: f64,
    pub constant: Vec<f64>,
    pub coeffs: Vec<Vec<f64>>,
}

impl PolyExpFn {
    pub fn eval(&self, state: usize, w: f64) -> f64 {
        let decay = (-self.mu * w).exp();
        let poly = self.coeffs[state]
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * w + c);
        self.constant[state] + decay * poly
    }

    pub fn eval_all(&self, w: f64) -> Vec<f64> {
        (0..self.constant.len()).map(|i| self.eval(i, w)).collect()
    }

    /// Each state's function after one more step of the chain.
    fn propagate(&self, p: &DMatrix<f64>) -> Self {
        let size = self.constant.len();
        let degree = self.coeffs[0].len();
        let constant = (0..size)
            .map(|j| compensated_sum((0..size).map(|i| self.constant[i] * p[(i, j)])))
            .collect();
        let coeffs = (0..size)
            .map(|j| {
                (0..degree)
                    .map(|l| compensated_sum((0..size).map(|i| self.coeffs[i][l] * p[(i, j)])))
                    .collect()
            })
            .collect();
        Self {
            mu: self.mu,
            constant,
            coeffs,
        }
    }
}

/// Integral of w^{j+1} e^{-mu w} against the law of W (rate mu):
/// (1/2)^{j+1} mu^{-(j+1)} sum_l w_l (l+j)! / (2^l (l-1)!). The atom at
/// zero contributes nothing.
pub fn moment_integral(dist: &MixedErlangWaitingDist, j: usize) -> f64 {
    let mu = dist.rate();
    let ln2 = std::f64::consts::LN_2;
    let base = -((j + 1) as f64) * (ln2 + mu.ln());
    compensated_sum(dist.weights().iter().enumerate().skip(1).map(|(l, &w)| {
        if w == 0.0 {
            0.0
        } else {
            w * (base + ln_factorial(l + j) - ln_factorial(l - 1) - l as f64 * ln2).exp()
        }
    }))
}

/// sum_i w_i G_i(x) with G_i the Erlang(i, mu) CDF.
pub fn mixed_erlang_cdf(weights: &[f64], mu: f64, x: f64) -> f64 {
    compensated_sum(
        weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * erlang_cdf(i, mu, x)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp(rate: f64) -> ServiceTimeModel {
        ServiceTimeModel::exponential(rate).unwrap()
    }

    #[test]
    fn single_phase_matrix() {
        let lam = 2.0;
        let mu = 1.0;
        let a = lam / (lam + mu);
        let c = build_chain(&PrepTimeModel::exponential(mu).unwrap(), &exp(lam)).unwrap();
        assert!((c.p(0, 0) - (1.0 - a)).abs() < 1e-15);
        assert!((c.p(0, 1) - a).abs() < 1e-15);
        assert!((c.p(1, 0) - (1.0 - a / 2.0)).abs() < 1e-15);
        assert!((c.p(1, 1) - a / 2.0).abs() < 1e-15);
    }

    #[test]
    fn erlang_two_initial_law() {
        let c = build_chain(&PrepTimeModel::erlang(2, 1.0).unwrap(), &exp(1.0)).unwrap();
        let w = c.initial_phase_law(0.0).unwrap().weights;
        assert!((w[2] - 0.5).abs() < 1e-15);
        assert!((w[1] - 0.25).abs() < 1e-15);
        assert!((w[0] - 0.25).abs() < 1e-15);
        let far = c.initial_phase_law(200.0).unwrap().weights;
        assert!((far[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_phase_propagation_matches_recursion() {
        let c = build_chain(&PrepTimeModel::exponential(1.0).unwrap(), &exp(1.0)).unwrap();
        let law = c.phase_law_at(&InitialCondition::zero(), 4).unwrap();
        assert!((law.weights[0] - 0.59375).abs() < 1e-15);
        assert!((law.weights[1] - 0.40625).abs() < 1e-15);
        let law = c.phase_law_at(&InitialCondition::zero(), 5).unwrap();
        assert!((law.weights[0] - 0.6015625).abs() < 1e-15);
        let poly = c.conditional_phase_poly(2).unwrap();
        let exact = crate::exp_exact::ExpCaseParams::new(1.0, exp(1.0), InitialCondition::zero()).unwrap();
        let p3 = crate::exp_exact::positive_prob(&exact, 3).unwrap();
        assert!((poly.eval(1, 0.0) - p3).abs() < 1e-15);
    }

    #[test]
    fn rows_are_stochastic() {
        for n in [1, 2, 4, 8, 16] {
            for service in [
                exp(1.0),
                ServiceTimeModel::erlang(3, 2.0).unwrap(),
                ServiceTimeModel::deterministic(0.7).unwrap(),
                ServiceTimeModel::hyper_exponential(vec![0.3, 0.7], vec![0.5, 3.0]).unwrap(),
            ] {
                let c = build_chain(&PrepTimeModel::erlang(n, 1.3).unwrap(), &service).unwrap();
                for i in 0..=n {
                    let s: f64 = c.matrix().row(i).iter().sum();
                    assert!((s - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn moment_integral_examples() {
        let law = MixedErlangLaw::new(1.0, vec![0.0, 1.0]).unwrap();
        assert!((moment_integral(&law, 0) - 0.25).abs() < 1e-15);
        let atom = MixedErlangLaw::new(1.0, vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(moment_integral(&atom, 3), 0.0);
    }

    #[test]
    fn stationary_law_is_invariant() {
        let c = build_chain(&PrepTimeModel::erlang(3, 2.0).unwrap(), &exp(1.0)).unwrap();
        let s = c.stationary_law().unwrap();
        let next = c.step(&s);
        for (a, b) in s.weights.iter().zip(&next.weights) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn cycle_law_sums_to_one() {
        let c = build_chain(&PrepTimeModel::erlang(2, 1.0).unwrap(), &exp(1.0)).unwrap();
        let pmf = c.cycle_pmfs(200).unwrap();
        let total = compensated_sum(pmf.iter().copied()) + c.cycle_tail(200).unwrap();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
