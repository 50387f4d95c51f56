//! Optimal values and thresholds as the market grows, next to the
//! mechanisms built from the large-market solution.

use mechlearn::cli::sweep;
use mechlearn::likelihood::{Engine, GridSpec};
use mechlearn::BeliefDistribution;

fn main() -> mechlearn::Result<()> {
    let engine = Engine::new(BeliefDistribution::uniform(), GridSpec::default())?;
    let (v_inf, rows, _) = sweep(&engine, &[2, 3, 5, 10, 20], 401)?;
    println!("large-market value {v_inf:.6}");
    println!("{:>3} {:>10} {:>8} {:>8} {:>10} {:>12}", "n", "V_n", "s_min", "s_max", "family", "gap");
    for r in rows {
        println!(
            "{:>3} {:>10.6} {:>8.4} {:>8.4} {:>10.6} {:>12.3e}",
            r.n,
            r.value,
            r.s_min.unwrap_or(f64::NAN),
            r.s_max.unwrap_or(f64::NAN),
            r.family_value,
            r.gap_to_asymptotic
        );
    }
    Ok(())
}
