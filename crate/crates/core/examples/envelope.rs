//! The efficient envelope for a few market sizes, against the two-agent
//! closed form `s²` and the large-market limit `s`.

use mechlearn::first_best::{efficient_envelope, efficient_slope};
use mechlearn::likelihood::{Engine, GridSpec};
use mechlearn::BeliefDistribution;

fn main() -> mechlearn::Result<()> {
    let engine = Engine::new(BeliefDistribution::uniform(), GridSpec::default())?;
    let sizes = [2, 3, 5, 10];
    let envelopes = sizes
        .iter()
        .map(|&n| efficient_envelope(&engine, n, 11))
        .collect::<mechlearn::Result<Vec<_>>>()?;

    print!("{:>5}", "s");
    for n in sizes {
        print!("{:>10}", format!("n={n}"));
    }
    println!("{:>10}", "s^2");
    for j in 0..11 {
        let s = envelopes[0].grid[j];
        print!("{s:>5.1}");
        for e in &envelopes {
            print!("{:>10.5}", e.upper[j]);
        }
        println!("{:>10.5}", s * s);
    }
    let agg = engine.others(2)?;
    println!("slope at 3/4 for n = 2: {:.4}", efficient_slope(&agg, 0.75));
    Ok(())
}
