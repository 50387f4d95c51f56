use mechlearn::distributions::{lr_point, sample, validate};
use mechlearn::{BeliefDistribution, State};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn family() -> impl Strategy<Value = BeliefDistribution> {
    prop_oneof![
        Just(BeliefDistribution::uniform()),
        (1.0f64..8.0).prop_map(|a| BeliefDistribution::beta_symmetric(a).unwrap()),
        (0.08f64..1.0).prop_map(|s| BeliefDistribution::truncated_normal(s).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn built_in_families_validate(d in family()) {
        let r = validate(&d).unwrap();
        prop_assert!(r.normalization_error <= 1e-8);
        prop_assert!(r.mean_error <= 1e-8);
        prop_assert!(r.positive_on_interior);
        prop_assert!(r.log_derivative_bound.is_finite());
        prop_assert!(r.log_concave && r.symmetric);
        prop_assert!(r.max_log_second_difference <= 1e-9);
    }

    #[test]
    fn conditionals_split_the_density(d in family(), s in 0.001f64..0.999) {
        let sum = d.conditional_pdf(s, State::Plus).unwrap() + d.conditional_pdf(s, State::Minus).unwrap();
        prop_assert!((sum - 2.0 * d.density(s)).abs() <= 1e-12 * (1.0 + d.density(s)));
    }

    #[test]
    fn conditionals_integrate_to_one(d in family()) {
        for state in [State::Plus, State::Minus] {
            prop_assert!((d.conditional_mass(state, 0.0, 1.0) - 1.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn likelihood_ratio_is_reciprocal(s in 1e-6f64..(1.0 - 1e-6)) {
        prop_assert!((lr_point(s).unwrap() * lr_point(1.0 - s).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn likelihood_ratio_increases(a in 1e-6f64..(1.0 - 1e-6), b in 1e-6f64..(1.0 - 1e-6)) {
        prop_assume!(a < b);
        prop_assert!(lr_point(a).unwrap() < lr_point(b).unwrap());
    }
}

#[test]
fn tabulated_density_round_trips_through_validation() {
    let raw: Vec<(f64, f64)> = (0..=20).map(|k| {
        let s = k as f64 / 20.0;
        (s, 1.0 + 0.5 * (1.0 - (2.0 * s - 1.0).powi(2)))
    }).collect();
    let mass: f64 = raw.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum();
    let pts: Vec<(f64, f64)> = raw.iter().map(|&(s, f)| (s, f / mass)).collect();
    let d = BeliefDistribution::tabulated(&pts).unwrap();
    let r = validate(&d).unwrap();
    assert!(r.normalization_error <= 1e-8);
    assert!(r.mean_error <= 1e-8);
    assert!(r.symmetric);
}

fn ks_distance(d: &BeliefDistribution, state: State, draws: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs: Vec<f64> = (0..draws).map(|_| sample(d, state, &mut rng)).collect();
    xs.sort_by(f64::total_cmp);
    let n = draws as f64;
    xs.iter().enumerate().step_by(97).map(|(i, &x)| {
        let f = d.conditional_mass(state, 0.0, x);
        (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
    }).fold(0.0, f64::max)
}

#[test]
fn sampler_matches_quadrature_cdf() {
    for d in [BeliefDistribution::uniform(), BeliefDistribution::truncated_normal(0.2).unwrap()] {
        for state in [State::Plus, State::Minus] {
            let ks = ks_distance(&d, state, 1_000_000, 11);
            assert!(ks <= 0.002, "{:?} {state:?}: {ks}", d.spec());
        }
    }
}
