use mechlearn::likelihood::{Engine, GridSpec};
use mechlearn::mechanisms::{
    asymptotic_family, designer_value, optimal_mechanism, solve_logconcave, two_threshold, MonotoneThresholdMechanism,
};
use mechlearn::optimizer::{objective_weights, solve_asymptotic};
use mechlearn::verification::{check_feasibility, convex_order_vs_majorization, mc_value};
use mechlearn::BeliefDistribution;
use proptest::prelude::*;

fn engines() -> Vec<Engine> {
    [
        BeliefDistribution::uniform(),
        BeliefDistribution::beta_symmetric(2.0).unwrap(),
        BeliefDistribution::truncated_normal(0.2).unwrap(),
    ]
    .into_iter()
    .map(|d| Engine::new(d, GridSpec::default()).unwrap())
    .collect()
}

#[test]
fn monte_carlo_agrees_with_quadrature() {
    for e in engines() {
        for n in [2, 3, 5] {
            let (_, mech) = solve_logconcave(&e, n).unwrap();
            let exact = designer_value(&mech, &e).unwrap();
            let mc = mc_value(&mech, &e, 100_000, 17, 8).unwrap();
            assert!(mc.agrees(exact, 4.0), "{:?} n={n}: {} ± {} vs {exact}", e.distribution().spec(), mc.mean, mc.se);
        }
    }
}

#[test]
fn produced_mechanisms_are_feasible() {
    for e in engines() {
        let limit = solve_asymptotic(&objective_weights(e.distribution(), 401)).unwrap();
        for n in [2, 3] {
            let mut mechs: Vec<MonotoneThresholdMechanism> = vec![
                solve_logconcave(&e, n).unwrap().1,
                optimal_mechanism(&e, n, 401).unwrap().mechanism,
                asymptotic_family(&e, n, &limit.utility).unwrap(),
                MonotoneThresholdMechanism::efficient(n, e.distribution()),
            ];
            for tau in [0.3, 0.7] {
                mechs.push(two_threshold(tau, &e, n).unwrap());
            }
            for mech in &mechs {
                let r = check_feasibility(mech, &e, 201, 1e-6).unwrap();
                assert!(r.ic_min_margin.unwrap() >= -1e-6, "{r:?}");
                assert!(r.ir_min.unwrap() >= -1e-6, "{r:?}");
                assert!(r.monotone_x_min_slack.unwrap() >= -1e-6, "{r:?}");
                assert!(r.envelope_residual.unwrap() <= 1e-5, "{r:?}");
            }
        }
    }
}

fn cumulative(atoms: &[f64]) -> Vec<f64> {
    atoms
        .iter()
        .scan(0.0, |acc, a| {
            *acc += a;
            Some(*acc)
        })
        .collect()
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (5usize..30).prop_flat_map(|k| {
        let base = prop::collection::vec(-1.0f64..1.0, k);
        let spreads = prop::collection::vec((1..k - 1, 0.0f64..0.3), 0..6);
        let noise = prop::collection::vec(-0.2f64..0.2, k);
        (base, spreads, noise, any::<bool>())
    })
    .prop_map(|(base, spreads, noise, spread_only)| {
        let k = base.len();
        let mut other = base.clone();
        if spread_only {
            for (j, c) in spreads {
                other[j - 1] += c;
                other[j] -= 2.0 * c;
                other[j + 1] += c;
            }
        } else {
            for (o, e) in other.iter_mut().zip(&noise) {
                *o += e;
            }
            let drift: f64 = noise.iter().sum();
            other[k - 1] -= drift;
        }
        (other, base)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn convex_order_matches_majorization((h_atoms, g_atoms) in instance()) {
        let k = h_atoms.len();
        let x: Vec<f64> = (0..k).map(|j| j as f64 / (k - 1) as f64).collect();
        let (maj, cvx) = convex_order_vs_majorization(&x, &cumulative(&h_atoms), &cumulative(&g_atoms)).unwrap();
        prop_assert_eq!(maj, cvx);
    }
}

#[test]
fn mismatched_totals_are_rejected() {
    let x = [0.0, 0.5, 1.0];
    assert!(convex_order_vs_majorization(&x, &[0.1, 0.2, 0.3], &[0.1, 0.2, 0.4]).is_err());
}
