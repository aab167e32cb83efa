use altserve::distributions::{PrepTimeModel, ServiceTimeModel, TimeLaw};
use altserve::numeric::erlang_pdf;
use altserve::stats::{ks_critical_value, ks_statistic};
use altserve::verify::adaptive_simpson;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn variants() -> Vec<ServiceTimeModel> {
    vec![
        ServiceTimeModel::exponential(1.3).unwrap(),
        ServiceTimeModel::erlang(3, 2.0).unwrap(),
        ServiceTimeModel::deterministic(0.7).unwrap(),
        ServiceTimeModel::hyper_exponential(vec![0.25, 0.75], vec![0.5, 4.0]).unwrap(),
    ]
}

fn service_strategy() -> impl Strategy<Value = ServiceTimeModel> {
    prop_oneof![
        (0.1f64..5.0).prop_map(|l| ServiceTimeModel::exponential(l).unwrap()),
        (1usize..6, 0.1f64..5.0).prop_map(|(k, nu)| ServiceTimeModel::erlang(k, nu).unwrap()),
        (0.0f64..3.0).prop_map(|d| ServiceTimeModel::deterministic(d).unwrap()),
        (0.05f64..0.95, 0.1f64..5.0, 0.1f64..5.0)
            .prop_map(|(p, a, b)| ServiceTimeModel::hyper_exponential(vec![p, 1.0 - p], vec![a, b]).unwrap()),
    ]
}

#[test]
fn order_zero_derivative_is_the_transform() {
    for m in variants() {
        for s in [0.1, 1.0, 10.0] {
            assert_eq!(m.lst_derivative(0, s).unwrap(), m.lst(s), "{m:?} s={s}");
        }
    }
}

#[test]
fn erlang_transform_against_quadrature() {
    let m = ServiceTimeModel::erlang(2, 2.0).unwrap();
    let f = |t: f64| (-2.0 * t).exp() * erlang_pdf(2, 2.0, t);
    let cuts = [0.0, 0.25, 1.0, 4.0, 40.0];
    let quad: f64 = cuts.windows(2).map(|c| adaptive_simpson(&f, c[0], c[1], 1e-14)).sum();
    assert!((quad - 0.25).abs() < 1e-10);
    assert!((m.lst(2.0) - quad).abs() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn derivatives_match_finite_differences(m in service_strategy(), order in 1usize..=8, si in 0usize..3) {
        let s = [0.5, 1.0, 2.0][si];
        let h = 1e-4 * s;
        let up = m.lst_derivative(order - 1, s + h).unwrap();
        let down = m.lst_derivative(order - 1, s - h).unwrap();
        let fd = (up - down) / (2.0 * h);
        let exact = m.lst_derivative(order, s).unwrap();
        // second-order central differences: error ~ h^2 |f'''| / 6
        let third = m.lst_derivative(order + 2, s).unwrap().abs();
        let tol = 1e-6 * exact.abs() + h * h * third;
        prop_assert!((fd - exact).abs() <= tol, "fd {fd} exact {exact} tol {tol}");
    }

    #[test]
    fn derivative_signs_alternate(m in service_strategy(), order in 0usize..40, s in 0.01f64..20.0) {
        let d = m.lst_derivative(order, s).unwrap();
        if d != 0.0 {
            prop_assert_eq!(d.is_sign_negative(), order % 2 == 1);
        }
    }

    #[test]
    fn transform_is_decreasing(m in service_strategy(), s in 0.0f64..10.0, ds in 0.01f64..1.0) {
        prop_assert!((m.lst(0.0) - 1.0).abs() <= 2.0 * f64::EPSILON);
        if m.mean() > 0.0 {
            prop_assert!(m.lst(s + ds) < m.lst(s));
        }
    }

    #[test]
    fn phase_count_probs_form_a_distribution(m in service_strategy(), s in 0.1f64..4.0) {
        let total: f64 = (0..4000).map(|k| m.phase_count_prob(k, s)).sum();
        prop_assert!((total - 1.0).abs() < 1e-9, "total {total}");
    }
}

#[test]
fn service_samplers_pass_ks() {
    let n = 100_000;
    for (i, m) in variants().into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        let mut xs: Vec<f64> = (0..n).map(|_| m.sample(&mut rng)).collect();
        if let ServiceTimeModel::Deterministic { value } = m {
            assert!(xs.iter().all(|x| *x == value));
            continue;
        }
        let d = ks_statistic(&mut xs, |x| m.cdf(x));
        assert!(d < ks_critical_value(n, 0.001), "{m:?}: D = {d}");
    }
}

#[test]
fn prep_samplers_pass_ks() {
    let n = 100_000;
    let preps = [
        PrepTimeModel::exponential(1.0).unwrap(),
        PrepTimeModel::erlang(3, 2.0).unwrap(),
        PrepTimeModel::new(1.5, vec![0.2, 0.0, 0.5, 0.3]).unwrap(),
    ];
    for (i, p) in preps.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + i as u64);
        let mut xs: Vec<f64> = (0..n).map(|_| p.sample(&mut rng)).collect();
        let d = ks_statistic(&mut xs, |x| p.cdf(x));
        assert!(d < ks_critical_value(n, 0.001), "{p:?}: D = {d}");
    }
}

#[test]
fn time_law_parses_both_families() {
    let prep: TimeLaw = "erlang:k=2,mu=3".parse().unwrap();
    assert!(prep.as_prep().is_some());
    let service: TimeLaw = "det:d=0.5".parse().unwrap();
    assert!(service.as_prep().is_none());
    assert_eq!(service.mean(), 0.5);
}

#[test]
fn negative_part_probability_against_monte_carlo() {
    use altserve::distributions::XDistribution;
    let cases = [
        (ServiceTimeModel::exponential(1.0).unwrap(), PrepTimeModel::exponential(1.0).unwrap()),
        (ServiceTimeModel::exponential(1.0).unwrap(), PrepTimeModel::erlang(2, 1.0).unwrap()),
        (ServiceTimeModel::deterministic(0.9).unwrap(), PrepTimeModel::new(1.2, vec![0.5, 0.2, 0.3]).unwrap()),
    ];
    let draws = 1_000_000;
    for (i, (service, prep)) in cases.into_iter().enumerate() {
        let x = XDistribution::new(service.clone(), prep.clone()).unwrap();
        let exact = x.negative_prob().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(300 + i as u64);
        let hits = (0..draws).filter(|_| prep.sample(&mut rng) <= service.sample(&mut rng)).count();
        let est = hits as f64 / draws as f64;
        let se = (exact * (1.0 - exact) / draws as f64).sqrt();
        assert!((est - exact).abs() < 4.0 * se, "case {i}: {est} vs {exact}");
    }
}
