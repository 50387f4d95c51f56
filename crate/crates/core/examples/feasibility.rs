//! Feasibility, ex-post incentive compatibility and a Monte Carlo value
//! check for the optimal, efficient and a broken mechanism.

use mechlearn::likelihood::{Engine, GridSpec};
use mechlearn::mechanisms::{designer_value, optimal_mechanism, MonotoneThresholdMechanism, PieceKind};
use mechlearn::verification::{check_epic, check_feasibility, mc_value};
use mechlearn::BeliefDistribution;

fn main() -> mechlearn::Result<()> {
    let engine = Engine::new(BeliefDistribution::uniform(), GridSpec::default())?;
    let d = engine.distribution().clone();
    let optimum = optimal_mechanism(&engine, 2, 801)?.mechanism;
    let candidates = [
        ("optimum", optimum),
        ("efficient", MonotoneThresholdMechanism::efficient(2, &d)),
        ("always", MonotoneThresholdMechanism::uniform_kind(PieceKind::Pooled { kappa: 1.0, tau: 0.0 }, 2, &d)),
    ];
    for (name, mech) in candidates {
        let r = check_feasibility(&mech, &engine, 201, 1e-6)?.merge(check_epic(&mech, &engine, 1e-6)?);
        let mc = mc_value(&mech, &engine, 200_000, 42, 8)?;
        println!("{name}");
        println!(
            "  IC {:+.2e}  IR {:+.2e}  EV {:.2e}  feasible {}",
            r.ic_min_margin.unwrap_or(f64::NAN),
            r.ir_min.unwrap_or(f64::NAN),
            r.envelope_residual.unwrap_or(f64::NAN),
            r.passed
        );
        println!("  ex-post violation mass {:.4}", r.epic_violation_mass.unwrap_or(f64::NAN));
        println!("  value {:.5}, Monte Carlo {:.5} ± {:.5}", designer_value(&mech, &engine)?, mc.mean, mc.se);
    }
    Ok(())
}
