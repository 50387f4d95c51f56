//! Queue-based allocation with binary signals: observing predecessors can
//! start a rejection cascade or an acceptance cascade.

use mechlearn::social_sim::{cascade_condition, compare_observation, simulate_queue, BinarySignalModel, QueueNetwork};

fn main() -> mechlearn::Result<()> {
    for (l, h) in [(0.2, 0.7), (0.3, 0.8)] {
        let m = BinarySignalModel::new(l, h)?;
        let full = simulate_queue(&QueueNetwork::Full(10), &m, 200_000, 1, 8)?;
        let empty = simulate_queue(&QueueNetwork::Empty(10), &m, 200_000, 1, 8)?;
        println!("l = {l}, h = {h}: {:?}, p_h = {:.3}", cascade_condition(&m), m.p_h());
        println!("  position  observed  concealed");
        for (a, b) in full.positions.iter().zip(&empty.positions) {
            println!("  {:>8}  {:>8.4}  {:>9.4}", a.position, a.acceptance_rate, b.acceptance_rate);
        }
        println!(
            "  agent 1 rejected in {} trials, followed by unanimous rejection in {}",
            full.cascades.first_rejected, full.cascades.first_rejected_all_reject
        );
        println!("  verdict: {:?}\n", compare_observation(&full, &empty));
    }

    // A line network where everyone sees only the agent just before them.
    let m = BinarySignalModel::new(0.2, 0.7)?;
    let line = QueueNetwork::custom((0..6).map(|i| if i == 0 { vec![] } else { vec![i - 1] }).collect())?;
    let r = simulate_queue(&line, &m, 100_000, 2, 8)?;
    let rates: Vec<String> = r.positions.iter().map(|p| format!("{:.3}", p.acceptance_rate)).collect();
    println!("line network acceptance: {}", rates.join(" "));
    Ok(())
}
