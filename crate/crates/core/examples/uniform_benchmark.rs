//! Uniform beliefs, two agents: solve the reduced program, read off the
//! three-piece mechanism and compare with the closed-form construction.

use mechlearn::likelihood::{Engine, GridSpec};
use mechlearn::mechanisms::{designer_value, optimal_mechanism, solve_logconcave, verify_certificate};
use mechlearn::first_best::efficient_value;
use mechlearn::BeliefDistribution;

fn main() -> mechlearn::Result<()> {
    let engine = Engine::new(BeliefDistribution::uniform(), GridSpec::default())?;
    let opt = optimal_mechanism(&engine, 2, 2001)?;
    let (s_min, s_max) = opt.mechanism.thresholds().expect("two-threshold shape");
    println!("LP value        {:.6}", opt.solution.value);
    println!("efficient value {:.6}", efficient_value(&engine, 2)?);
    println!("thresholds      s_min = {s_min:.4}, s_max = {s_max:.4}");
    for p in &opt.mechanism.pieces {
        println!("  [{:.4}, {:.4}] {:?}", p.lo, p.hi, p.kind);
    }

    let (sol, mech) = solve_logconcave(&engine, 2)?;
    let cert = verify_certificate(&mech, engine.distribution())?;
    println!("closed form     tau = {:.6}, s_min = {:.6}, s_max = {:.6}", sol.tau, sol.s_min, sol.s_max);
    println!("sign integral   {:.8} (9/64 = {:.8})", cert.sign_integral, 9.0 / 64.0);
    println!("designer value  {:.6}", designer_value(&mech, &engine)?);
    Ok(())
}
