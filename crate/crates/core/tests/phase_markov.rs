use altserve::distributions::{MixedErlangLaw, PrepTimeModel, ServiceTimeModel};
use altserve::phase_markov::{build_chain, moment_integral, PhaseLaw};
use altserve::sim::{self, RecursionKind, SimConfig};
use altserve::verify::moment_integral_quadrature;
use altserve::InitialCondition;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

fn services() -> Vec<ServiceTimeModel> {
    vec![
        ServiceTimeModel::exponential(1.0).unwrap(),
        ServiceTimeModel::erlang(3, 2.5).unwrap(),
        ServiceTimeModel::deterministic(0.8).unwrap(),
        ServiceTimeModel::hyper_exponential(vec![0.3, 0.7], vec![0.4, 3.0]).unwrap(),
    ]
}

#[test]
fn rows_are_stochastic_for_many_phase_counts() {
    for n in [1usize, 2, 4, 8, 16] {
        for service in services() {
            let chain = build_chain(&PrepTimeModel::erlang(n, 1.7).unwrap(), &service).unwrap();
            let m = chain.matrix();
            for i in 0..=n {
                let row: f64 = (0..=n).map(|j| m[(i, j)]).sum();
                assert!((row - 1.0).abs() < 1e-12, "N={n} {service:?} row {i}: {row}");
                assert!((0..=n).all(|j| m[(i, j)] >= 0.0));
            }
        }
    }
}

#[test]
fn propagation_conserves_mass() {
    let prep = PrepTimeModel::new(0.9, vec![0.1, 0.3, 0.0, 0.6]).unwrap();
    for service in services() {
        let chain = build_chain(&prep, &service).unwrap();
        for initial in [InitialCondition::zero(), InitialCondition::Fixed(1.3), InitialCondition::EqualsB1] {
            for law in chain.phase_laws(&initial, 300).unwrap() {
                let total: f64 = law.weights.iter().sum();
                assert!((total - 1.0).abs() < 1e-12);
                assert!(law.weights.iter().all(|w| *w >= -1e-12));
            }
        }
    }
}

#[test]
fn cycle_pmf_plus_tail_is_one() {
    for n in [2usize, 3, 5] {
        for service in services() {
            let chain = build_chain(&PrepTimeModel::erlang(n, 1.0).unwrap(), &service).unwrap();
            let pmf = chain.cycle_pmfs(200).unwrap();
            let total = altserve::numeric::compensated_sum(pmf.iter().copied()) + chain.cycle_tail(200).unwrap();
            assert!((total - 1.0).abs() < 1e-12, "N={n} {service:?}: {total}");
        }
    }
}

#[test]
fn conditional_phase_functions_are_distributions() {
    let chain = build_chain(&PrepTimeModel::erlang(3, 1.2).unwrap(), &ServiceTimeModel::exponential(0.9).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for k in [1usize, 2, 5] {
        let poly = chain.conditional_phase_poly(k).unwrap();
        for _ in 0..100 {
            let w: f64 = rng.sample::<f64, _>(Exp1) * 4.0;
            let v = poly.eval_all(w);
            let total: f64 = v.iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "k={k} w={w}: {total}");
            assert!(v.iter().all(|p| (-1e-12..=1.0 + 1e-12).contains(p)), "k={k} w={w}: {v:?}");
        }
    }
}

#[test]
fn moment_integral_matches_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let n = rng.random_range(1..=8usize);
        let mu = rng.random_range(0.2..5.0);
        let raw: Vec<f64> = (0..=n).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let law = MixedErlangLaw::new(mu, raw.iter().map(|w| w / total).collect()).unwrap();
        let j = rng.random_range(0..=n);
        let closed = moment_integral(&law, j);
        let quad = moment_integral_quadrature(&law, j);
        assert!(((closed - quad) / quad).abs() < 1e-9, "{law:?} j={j}: {closed} vs {quad}");
    }
}

/// Remaining phases of a fresh preparation time after `elapsed` time, by
/// running its phases one at a time.
fn remaining_phases(prep: &PrepTimeModel, elapsed: f64, rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut k = prep.max_phases();
    for (i, w) in prep.weights().iter().enumerate() {
        acc += w;
        if u < acc {
            k = i + 1;
            break;
        }
    }
    let mut t = 0.0;
    for done in 0..k {
        t += rng.sample::<f64, _>(Exp1) / prep.rate();
        if t > elapsed {
            return k - done;
        }
    }
    0
}

#[test]
fn transition_matrix_matches_phase_simulation() {
    let service = ServiceTimeModel::hyper_exponential(vec![0.5, 0.5], vec![0.7, 2.0]).unwrap();
    for prep in [PrepTimeModel::erlang(2, 1.3).unwrap(), PrepTimeModel::new(1.0, vec![0.4, 0.6]).unwrap()] {
        let chain = build_chain(&prep, &service).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let draws = 200_000;
        for i in 0..=2usize {
            let mut counts = [0u64; 3];
            for _ in 0..draws {
                let w: f64 = (0..i).map(|_| rng.sample::<f64, _>(Exp1)).sum::<f64>() / prep.rate();
                let a = service.sample(&mut rng);
                counts[remaining_phases(&prep, a + w, &mut rng)] += 1;
            }
            for j in 0..=2 {
                let p = chain.p(i, j);
                let est = counts[j] as f64 / draws as f64;
                let se = (p * (1.0 - p) / draws as f64).sqrt();
                assert!((est - p).abs() <= 4.0 * se + 1e-12, "p[{i},{j}] = {p}, simulated {est}");
            }
        }
    }
}

#[test]
fn conditional_laws_match_simulation_from_fixed_start() {
    let service = ServiceTimeModel::exponential(1.0).unwrap();
    let prep = PrepTimeModel::erlang(2, 1.0).unwrap();
    let chain = build_chain(&prep, &service).unwrap();
    for w in [0.0, 0.7, 2.5] {
        let cfg = SimConfig::new(RecursionKind::Alternating, service.clone(), prep.clone())
            .initial(InitialCondition::Fixed(w))
            .horizon(4)
            .replications(200_000)
            .seed(40)
            .x_grid(vec![0.0]);
        for k in 1..=3usize {
            let poly = chain.conditional_phase_poly(k).unwrap();
            let est = sim::estimate_transient_cdf(&cfg, 1 + k).unwrap();
            let p0 = poly.eval(0, w);
            assert!(est.cdf[0].z_score_proportion(p0).abs() < 4.0, "w={w} k={k}: {:?} vs {p0}", est.cdf[0]);
            let mean = sim::estimate_mean(&cfg, 1 + k).unwrap();
            let exact = chain.conditional_mean(k, w).unwrap();
            assert!(mean.z_score(exact).abs() < 4.0, "w={w} k={k}: {mean:?} vs {exact}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn stationary_law_is_a_fixed_point(
        n in 1usize..6,
        mu in 0.3f64..3.0,
        lambda in 0.3f64..3.0,
    ) {
        let chain = build_chain(&PrepTimeModel::erlang(n, mu).unwrap(), &ServiceTimeModel::exponential(lambda).unwrap()).unwrap();
        let pi = chain.stationary_law().unwrap();
        let next: PhaseLaw = chain.step(&pi);
        for (a, b) in pi.weights.iter().zip(&next.weights) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn transient_cdfs_are_monotone_in_x(
        weights in prop::collection::vec(0.0f64..1.0, 1..5),
        mu in 0.3f64..3.0,
        d in 0.1f64..2.0,
        n in 2usize..15,
    ) {
        prop_assume!(weights.iter().sum::<f64>() > 1e-3);
        let total: f64 = weights.iter().sum();
        let prep = PrepTimeModel::new(mu, weights.iter().map(|w| w / total).collect()).unwrap();
        let chain = build_chain(&prep, &ServiceTimeModel::deterministic(d).unwrap());
        prop_assume!(chain.is_ok());
        let chain = chain.unwrap();
        let mut last = 0.0;
        for i in 0..40 {
            let v = chain.transient_cdf(&InitialCondition::zero(), n, i as f64 * 0.25).unwrap();
            prop_assert!(v >= last - 1e-14 && v <= 1.0 + 1e-14);
            last = v;
        }
    }
}
