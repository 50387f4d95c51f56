//! Convex order against majorization of cumulative masses, on a measure and
//! a random sequence of mean-preserving spreads of it.

use mechlearn::verification::convex_order_vs_majorization;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cumulative(atoms: &[f64]) -> Vec<f64> {
    atoms.iter().scan(0.0, |acc, a| {
        *acc += a;
        Some(*acc)
    }).collect()
}

fn main() -> mechlearn::Result<()> {
    let k = 41;
    let x: Vec<f64> = (0..k).map(|j| j as f64 / (k - 1) as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
    let mut spread = base.clone();
    for _ in 0..10 {
        let j = rng.gen_range(1..k - 1);
        let c = 0.1 * rng.gen::<f64>();
        spread[j - 1] += c;
        spread[j] -= 2.0 * c;
        spread[j + 1] += c;
    }
    let (h, g) = (cumulative(&spread), cumulative(&base));
    println!("spread vs base:  {:?}", convex_order_vs_majorization(&x, &h, &g)?);
    println!("base vs spread:  {:?}", convex_order_vs_majorization(&x, &g, &h)?);

    let mut agree = 0;
    for _ in 0..100 {
        let a: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() - 0.3).collect();
        let mut b: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() - 0.3).collect();
        let shift = a.iter().sum::<f64>() - b.iter().sum::<f64>();
        b[k / 2] += shift;
        let (m, c) = convex_order_vs_majorization(&x, &cumulative(&a), &cumulative(&b))?;
        agree += usize::from(m == c);
    }
    println!("random signed pairs with verdicts agreeing: {agree}/100");
    Ok(())
}
