use mechlearn::error::Error;
use mechlearn::first_best::{lower_bound, unit_grid};
use mechlearn::likelihood::{Engine, GridSpec};
use mechlearn::mechanisms::{
    asymptotic_family, designer_value, export_persuasion_menu, mechanism_utility, optimal_mechanism,
    slope_intercept, solve_line, solve_logconcave, MonotoneThresholdMechanism, PieceKind,
};
use mechlearn::optimizer::IndirectUtility;
use mechlearn::BeliefDistribution;
use proptest::prelude::*;
use std::sync::OnceLock;

fn uniform() -> &'static Engine {
    static E: OnceLock<Engine> = OnceLock::new();
    E.get_or_init(|| Engine::new(BeliefDistribution::uniform(), GridSpec::default()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // For two uniform agents the other's belief exceeds τ/(1+τ) iff its
    // likelihood ratio exceeds τ, so both tails are polynomials.
    #[test]
    fn pair_line_matches_closed_form(kappa in 0.0f64..=1.0, tau in 0.0f64..20.0) {
        let (a, b) = slope_intercept(kappa, tau, uniform(), 2).unwrap();
        let c = tau / (1.0 + tau);
        prop_assert!((a - kappa * ((1.0 - c * c) + (1.0 - c).powi(2))).abs() <= 1e-6);
        prop_assert!((b - kappa * (1.0 - c).powi(2)).abs() <= 1e-6);
        prop_assert!((0.0..=2.0).contains(&a) && (0.0..=1.0).contains(&b) && a >= 2.0 * b - 1e-12);
    }

    #[test]
    fn solve_line_inverts_slope_intercept(kappa in 0.05f64..=1.0, tau in 0.05f64..10.0, n in 2usize..5) {
        let (a, b) = slope_intercept(kappa, tau, uniform(), n).unwrap();
        let (k2, t2) = solve_line(a, b, uniform(), n).unwrap();
        let (a2, b2) = slope_intercept(k2, t2, uniform(), n).unwrap();
        prop_assert!((a - a2).abs() <= 1e-6 && (b - b2).abs() <= 1e-6);
    }
}

#[test]
fn mechanism_utility_reproduces_the_lp() {
    let opt = optimal_mechanism(uniform(), 2, 2001).unwrap();
    let u = mechanism_utility(&opt.mechanism, uniform(), 2001).unwrap();
    let gap = u.values.iter().zip(&opt.solution.utility.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap <= 2e-3, "{gap}");
}

#[test]
fn always_allocating_breaks_participation() {
    let d = uniform().distribution();
    let mech = MonotoneThresholdMechanism::uniform_kind(PieceKind::Pooled { kappa: 1.0, tau: 0.0 }, 2, d);
    assert!(matches!(mechanism_utility(&mech, uniform(), 101), Err(Error::NonConvexUtility(_))));
}

#[test]
fn exclusion_gives_zero_utility() {
    let mech = MonotoneThresholdMechanism::exclude_all(3, uniform().distribution());
    let u = mechanism_utility(&mech, uniform(), 101).unwrap();
    assert!(u.values.iter().all(|&v| v == 0.0));
    assert_eq!(designer_value(&mech, uniform()).unwrap(), 0.0);
}

#[test]
fn json_round_trip() {
    let (_, mech) = solve_logconcave(uniform(), 3).unwrap();
    let back = MonotoneThresholdMechanism::from_json(&mech.to_json().unwrap()).unwrap();
    assert_eq!(mech, back);
}

#[test]
fn partition_gaps_are_rejected() {
    use mechlearn::mechanisms::ThresholdPiece;
    let pieces = vec![
        ThresholdPiece::new(0.0, 0.4, PieceKind::Exclude),
        ThresholdPiece::new(0.5, 1.0, PieceKind::EfficientTail),
    ];
    assert!(MonotoneThresholdMechanism::new(pieces, 2, uniform().distribution()).is_err());
}

#[test]
fn menu_needs_two_agents() {
    let mech = MonotoneThresholdMechanism::efficient(3, uniform().distribution());
    assert!(matches!(export_persuasion_menu(&mech), Err(Error::WrongMarketSize(3))));
}

#[test]
fn lower_envelope_limit_gives_the_degenerate_family() {
    for d in [BeliefDistribution::uniform(), BeliefDistribution::beta_symmetric(2.0).unwrap()] {
        let e = Engine::new(d, GridSpec::default()).unwrap();
        let grid = unit_grid(401);
        let values = grid.iter().map(|&s| lower_bound(s)).collect();
        let mech = asymptotic_family(&e, 4, &IndirectUtility { grid, values }).unwrap();
        for p in &mech.pieces {
            let mid = 0.5 * (p.lo + p.hi);
            match p.kind {
                PieceKind::Exclude => assert!(mid < 0.5),
                PieceKind::Pooled { kappa, tau } => assert!(mid > 0.5 && kappa == 1.0 && tau == 0.0),
                PieceKind::EfficientTail => panic!("unexpected efficient piece"),
            }
        }
        let above_half = e.distribution().integrate(|_| 1.0, 0.5, 1.0, &[]);
        assert!((designer_value(&mech, &e).unwrap() - above_half).abs() <= 1e-3);
    }
}
