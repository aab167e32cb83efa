use altserve::distributions::{PrepTimeModel, ServiceTimeModel};
use altserve::exp_exact::{self, ExpCaseParams};
use altserve::gf_fixedpoint::GfProblem;
use altserve::phase_markov::build_chain;
use altserve::InitialCondition;
use proptest::prelude::*;

/// Exponential service rate giving P[X > 0] = a at prep rate mu.
fn params_for(a: f64, mu: f64, initial: InitialCondition) -> ExpCaseParams {
    let lambda = a * mu / (1.0 - a);
    let p = ExpCaseParams::new(mu, ServiceTimeModel::exponential(lambda).unwrap(), initial).unwrap();
    assert!((p.a() - a).abs() < 1e-12);
    p
}

const A_VALUES: [f64; 5] = [0.01, 0.25, 0.5, 0.75, 0.99];

#[test]
fn mixtures_stay_valid_for_long_horizons() {
    for a in A_VALUES {
        for initial in [InitialCondition::zero(), InitialCondition::Fixed(2.0), InitialCondition::EqualsB1] {
            let p = params_for(a, 1.0, initial);
            for n in (2..=10_000).step_by(7).chain([10_000]) {
                let d = exp_exact::waiting_dist(&p, n).unwrap();
                assert!((0.0..=1.0).contains(&d.p_zero), "a={a} n={n}: {}", d.p_zero);
            }
        }
    }
}

#[test]
fn zero_probability_recursion() {
    for a in A_VALUES {
        let p = params_for(a, 1.0, InitialCondition::zero());
        for n in 2..=100 {
            let now = exp_exact::transient_cdf(&p, n, 0.0).unwrap();
            let next = exp_exact::transient_cdf(&p, n + 1, 0.0).unwrap();
            assert!((next - (1.0 - a / 2.0 - a / 2.0 * now)).abs() < 1e-14, "a={a} n={n}");
        }
    }
}

#[test]
fn long_run_matches_fixed_point_solution() {
    let service = ServiceTimeModel::exponential(1.0).unwrap();
    let prep = PrepTimeModel::exponential(1.0).unwrap();
    let params = ExpCaseParams::new(1.0, service.clone(), InitialCondition::zero()).unwrap();
    let stationary = exp_exact::stationary_dist(&params);
    let problem = GfProblem::new(&service, &prep, &InitialCondition::zero()).unwrap();
    let r = 0.999;
    let sol = problem.solve(r, 1e-10).unwrap();
    for &x in problem.grid() {
        let diff = ((1.0 - r) * sol.eval(x) - stationary.cdf(x)).abs();
        assert!(diff < 5e-3, "x={x}: {diff}");
    }
}

fn initial_strategy() -> impl Strategy<Value = InitialCondition> {
    prop_oneof![
        Just(InitialCondition::zero()),
        Just(InitialCondition::EqualsB1),
        Just(InitialCondition::Stationary),
        (0.0f64..5.0).prop_map(InitialCondition::Fixed),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn covariance_sign_and_bound(
        lambda in 0.05f64..20.0,
        mu in 0.05f64..20.0,
        initial in initial_strategy(),
        n in 2usize..30,
    ) {
        let p = ExpCaseParams::new(mu, ServiceTimeModel::exponential(lambda).unwrap(), initial).unwrap();
        for k in 1..=20usize {
            let c = exp_exact::covariance(&p, n, k).unwrap();
            let bound = exp_exact::coupling_bound(
                exp_exact::mean(&p, n).unwrap(),
                1.0 / mu,
                p.a(),
                k,
            );
            prop_assert!(c.abs() <= bound * (1.0 + 1e-12), "k={} c={} bound={}", k, c, bound);
            if c != 0.0 {
                prop_assert_eq!(c < 0.0, k % 2 == 1, "k={} c={}", k, c);
            }
        }
    }

    #[test]
    fn closed_forms_agree_with_single_phase_chain(
        lambda in 0.1f64..5.0,
        mu in 0.1f64..5.0,
        initial in initial_strategy(),
        x in 0.0f64..6.0,
    ) {
        let service = ServiceTimeModel::exponential(lambda).unwrap();
        let p = ExpCaseParams::new(mu, service.clone(), initial.clone()).unwrap();
        let chain = build_chain(&PrepTimeModel::exponential(mu).unwrap(), &service).unwrap();
        for n in [2usize, 3, 7, 20] {
            let a = exp_exact::transient_cdf(&p, n, x).unwrap();
            let b = chain.transient_cdf(&initial, n, x).unwrap();
            prop_assert!((a - b).abs() < 1e-12, "n={} {} vs {}", n, a, b);
        }
    }

    #[test]
    fn cycle_pmf_normalises(a in 0.001f64..0.999, n in 1usize..200) {
        let p = params_for(a, 1.0, InitialCondition::zero());
        let partial: f64 = altserve::numeric::compensated_sum((1..=n).map(|c| exp_exact::cycle_pmf(&p, c).unwrap()));
        prop_assert!((partial + exp_exact::cycle_tail(&p, n).unwrap() - 1.0).abs() < 1e-14);
    }
}
