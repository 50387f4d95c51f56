use mechlearn::first_best::{efficient_envelope, efficient_slope, lower_bound, unit_grid};
use mechlearn::likelihood::{Engine, GridSpec};
use mechlearn::quadrature::gauss;
use mechlearn::BeliefDistribution;
use proptest::prelude::*;

fn families() -> Vec<BeliefDistribution> {
    vec![
        BeliefDistribution::uniform(),
        BeliefDistribution::beta_symmetric(2.0).unwrap(),
        BeliefDistribution::truncated_normal(0.2).unwrap(),
    ]
}

fn family() -> impl Strategy<Value = BeliefDistribution> {
    prop_oneof![
        Just(BeliefDistribution::uniform()),
        (1.0f64..6.0).prop_map(|a| BeliefDistribution::beta_symmetric(a).unwrap()),
        (0.1f64..0.8).prop_map(|s| BeliefDistribution::truncated_normal(s).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn envelope_shape(d in family(), n in 1usize..9) {
        let e = Engine::new(d, GridSpec::default()).unwrap();
        let b = efficient_envelope(&e, n, 201).unwrap();
        prop_assert!(b.hull_adjustment < 1e-6);
        for j in 0..b.len() {
            let s = b.grid[j];
            prop_assert_eq!(b.lower[j], lower_bound(s));
            prop_assert!(b.upper[j] >= b.lower[j] - 1e-9);
            prop_assert!(b.upper[j] <= s + 1e-9);
            if j > 0 {
                prop_assert!(b.upper[j] >= b.upper[j - 1] - 1e-9);
            }
            if j > 0 && j + 1 < b.len() {
                prop_assert!(b.upper[j - 1] - 2.0 * b.upper[j] + b.upper[j + 1] >= -1e-9);
            }
        }
        prop_assert!(b.upper[0].abs() <= 1e-9);
    }
}

#[test]
fn envelope_integrates_the_efficient_allocation() {
    for d in families() {
        let e = Engine::new(d, GridSpec::default()).unwrap();
        for n in [2, 3, 5] {
            let agg = e.others(n).unwrap();
            let b = efficient_envelope(&e, n, 401).unwrap();
            let mut integral = 0.0;
            let mut worst = 0.0f64;
            for j in 1..b.len() {
                integral += gauss(|t| efficient_slope(&agg, t), b.grid[j - 1], b.grid[j]);
                worst = worst.max((b.upper[j] - b.upper[0] - integral).abs());
            }
            assert!(worst <= 1e-3, "n={n}: {worst}");
        }
    }
}

#[test]
fn finite_differences_match_the_slope() {
    let e = Engine::new(BeliefDistribution::beta_symmetric(2.0).unwrap(), GridSpec::default()).unwrap();
    for n in [2, 4] {
        let agg = e.others(n).unwrap();
        let b = efficient_envelope(&e, n, 2001).unwrap();
        let h = b.step();
        for j in (10..b.len() - 10).step_by(50) {
            let fd = (b.upper[j + 1] - b.upper[j - 1]) / (2.0 * h);
            let (plus, minus) = agg.efficient_tails(b.grid[j]);
            assert!((fd - (plus + minus)).abs() <= 1e-3, "n={n} s={}: {fd} vs {}", b.grid[j], plus + minus);
        }
    }
}

#[test]
fn envelope_grows_with_market_size() {
    let e = Engine::new(BeliefDistribution::uniform(), GridSpec::default()).unwrap();
    let envs: Vec<_> = [2, 3, 5, 10, 20].iter().map(|&n| efficient_envelope(&e, n, 401).unwrap()).collect();
    for w in envs.windows(2) {
        for (a, b) in w[0].upper.iter().zip(&w[1].upper) {
            assert!(b - a >= -1e-6);
        }
    }
}

#[test]
fn envelope_is_strictly_convex_inside() {
    for d in families() {
        let e = Engine::new(d, GridSpec::default()).unwrap();
        for n in [2, 3, 5] {
            let b = efficient_envelope(&e, n, 401).unwrap();
            for j in 1..b.len() - 1 {
                let dd = b.upper[j - 1] - 2.0 * b.upper[j] + b.upper[j + 1];
                assert!(dd > 0.0, "{:?} n={n} s={}: {dd}", e.distribution().spec(), b.grid[j]);
            }
        }
    }
}

#[test]
fn uniform_pair_envelope_is_quadratic() {
    let e = Engine::new(BeliefDistribution::uniform(), GridSpec::default()).unwrap();
    let b = efficient_envelope(&e, 2, 2001).unwrap();
    let err = unit_grid(2001).iter().zip(&b.upper).map(|(s, u)| (u - s * s).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-3, "{err}");
}
