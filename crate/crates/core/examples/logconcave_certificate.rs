//! Two-threshold solutions with their optimality certificates for several
//! symmetric log-concave belief densities.

use mechlearn::likelihood::{Engine, GridSpec};
use mechlearn::mechanisms::{certificate_report, solve_logconcave};
use mechlearn::BeliefDistribution;

fn main() -> mechlearn::Result<()> {
    let families = [
        ("uniform", BeliefDistribution::uniform()),
        ("beta(2, 2)", BeliefDistribution::beta_symmetric(2.0)?),
        ("beta(5, 5)", BeliefDistribution::beta_symmetric(5.0)?),
        ("normal(0.2)", BeliefDistribution::truncated_normal(0.2)?),
    ];
    println!("{:<12} {:>2} {:>9} {:>8} {:>8} {:>10} {:>10}  pass", "family", "n", "tau", "s_min", "s_max", "sign", "dom max");
    for (name, d) in families {
        let engine = Engine::new(d, GridSpec::default())?;
        for n in [2, 3, 5] {
            let (sol, mech) = solve_logconcave(&engine, n)?;
            let c = certificate_report(&mech, engine.distribution())?;
            println!(
                "{name:<12} {n:>2} {:>9.5} {:>8.4} {:>8.4} {:>10.3e} {:>10.3e}  {}",
                sol.tau, sol.s_min, sol.s_max, c.sign_integral, c.dominance_max, c.passed
            );
        }
    }
    Ok(())
}
