//! The two-agent optimum read as a menu of experiments offered to a
//! privately informed receiver.

use mechlearn::likelihood::{Engine, GridSpec};
use mechlearn::mechanisms::{export_persuasion_menu, optimal_mechanism};
use mechlearn::BeliefDistribution;

fn main() -> mechlearn::Result<()> {
    for d in [BeliefDistribution::uniform(), BeliefDistribution::beta_symmetric(3.0)?] {
        let engine = Engine::new(d, GridSpec::default())?;
        let mech = optimal_mechanism(&engine, 2, 1001)?.mechanism;
        let menu = export_persuasion_menu(&mech)?;
        println!("{:?}", engine.distribution().spec());
        for e in &menu.entries {
            println!("  receiver belief [{:.4}, {:.4}]  {:?}", e.lambda_lo, e.lambda_hi, e.experiment);
        }
        println!("  deterministic: {}, monotone partitional: {}", menu.deterministic, menu.monotone_partitional);
    }
    Ok(())
}
