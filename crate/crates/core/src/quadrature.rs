//! Gauss–Legendre rules and composite integration helpers.

use std::sync::OnceLock;

/// Nodes and weights of the `order`-point Gauss–Legendre rule on [-1, 1].
fn legendre_rule(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..(order + 1) / 2 {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

fn rule16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| legendre_rule(16))
}

/// 16-point Gauss–Legendre on a single interval.
pub fn gauss<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (nodes, weights) = rule16();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    nodes
        .iter()
        .zip(weights)
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Composite rule over `[a, b]` split at every breakpoint inside the interval
/// and then into `panels` equal panels between consecutive breakpoints.
pub fn composite<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    panels: usize,
) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut cuts = vec![a];
    cuts.extend(breakpoints.iter().copied().filter(|&x| x > a && x < b));
    cuts.push(b);
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();
    let panels = panels.max(1);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let step = (w[1] - w[0]) / panels as f64;
        for k in 0..panels {
            let lo = w[0] + step * k as f64;
            let hi = if k + 1 == panels { w[1] } else { lo + step };
            total += gauss(&mut f, lo, hi);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let v = gauss(|x| x.powi(7) - 3.0 * x.powi(2) + 1.0, 0.0, 2.0);
        assert!((v - (256.0 / 8.0 - 8.0 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn composite_handles_kinks() {
        let v = composite(|x: f64| (x - 0.3).abs(), 0.0, 1.0, &[0.3], 1);
        assert!((v - (0.045 + 0.245)).abs() < 1e-14);
    }
}
