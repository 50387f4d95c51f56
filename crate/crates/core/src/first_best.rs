//! The efficient-allocation envelope and the participation floor.
//!
//! Under the efficient rule an agent of belief `s` receives the good iff the
//! likelihood ratio of the others is at least `(1 − s)/s`, so the truthful
//! payoff is `Ū(s) = s·T₊((1−s)/s) − (1−s)·T₋((1−s)/s)`. Any feasible
//! indirect utility lies between `max{0, 2s − 1}` and `Ū`.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::distributions::State;
use crate::error::{Error, Result};
use crate::likelihood::{Aggregate, Engine};

/// Default number of points in the belief grid on `[0, 1]`.
pub const DEFAULT_K: usize = 2001;
/// Largest convexification adjustment tolerated without a warning.
pub const HULL_TOL: f64 = 1e-6;

/// Uniform grid of `k` points on `[0, 1]`.
pub fn unit_grid(k: usize) -> Vec<f64> {
    let last = (k - 1) as f64;
    (0..k).map(|j| j as f64 / last).collect()
}

/// `max{0, 2s − 1}`.
#[inline]
pub fn lower_bound(s: f64) -> f64 {
    (2.0 * s - 1.0).max(0.0)
}

/// Upper and lower bounds on feasible indirect utilities on a grid.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeBounds {
    pub grid: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    /// Market size, `None` for the large-market limit.
    pub n: Option<usize>,
    /// Largest change made by the convex projection of the raw envelope.
    pub hull_adjustment: f64,
}

impl EnvelopeBounds {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    /// Piecewise-linear interpolation of the upper envelope.
    pub fn upper_at(&self, s: f64) -> f64 {
        interpolate(&self.grid, &self.upper, s)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["s", "lower", "upper"])?;
        for j in 0..self.len() {
            w.write_record([fmt(self.grid[j]), fmt(self.lower[j]), fmt(self.upper[j])])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn fmt(x: f64) -> String {
    format!("{x:.12}")
}

/// Linear interpolation on a sorted uniform-or-not grid, clamped at the ends.
pub fn interpolate(grid: &[f64], values: &[f64], s: f64) -> f64 {
    let n = grid.len();
    if s <= grid[0] {
        return values[0];
    }
    if s >= grid[n - 1] {
        return values[n - 1];
    }
    let k = grid.partition_point(|&g| g <= s).clamp(1, n - 1);
    let t = (s - grid[k - 1]) / (grid[k] - grid[k - 1]);
    values[k - 1] * (1.0 - t) + values[k] * t
}

/// Greatest convex function below the points `(x_j, y_j)`, sampled on `x`.
pub fn convex_minorant(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut hull: Vec<usize> = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (x[b] - x[a]) * (y[j] - y[a]) - (y[b] - y[a]) * (x[j] - x[a]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(j);
    }
    let mut out = vec![0.0; x.len()];
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        for j in a..=b {
            let t = (x[j] - x[a]) / (x[b] - x[a]);
            out[j] = y[a] * (1.0 - t) + y[b] * t;
        }
    }
    if hull.len() == 1 {
        out[hull[0]] = y[hull[0]];
    }
    out
}

/// Truthful payoff of belief `s` under the efficient allocation.
pub fn efficient_utility(agg: &Aggregate, s: f64) -> f64 {
    let (tp, tm) = agg.efficient_tails(s);
    s * tp - (1.0 - s) * tm
}

/// `2^{n−1}·X(s)` for the efficient allocation, which is also `Ū′(s)`.
pub fn efficient_slope(agg: &Aggregate, s: f64) -> f64 {
    let (tp, tm) = agg.efficient_tails(s);
    tp + tm
}

/// Efficient envelope `Ū` for a market of `n` agents on a `k`-point grid.
pub fn efficient_envelope(engine: &Engine, n: usize, k: usize) -> Result<EnvelopeBounds> {
    if k < 3 {
        return Err(Error::Config(format!("grid size {k} too small")));
    }
    let agg = engine.others(n)?;
    let grid = unit_grid(k);
    let raw: Vec<f64> = grid.iter().map(|&s| efficient_utility(&agg, s)).collect();
    let lower: Vec<f64> = grid.iter().map(|&s| lower_bound(s)).collect();
    let hull = convex_minorant(&grid, &raw);
    let upper: Vec<f64> = hull.iter().zip(&lower).map(|(&u, &l)| u.max(l)).collect();
    let hull_adjustment =
        upper.iter().zip(&raw).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if hull_adjustment > HULL_TOL {
        log::warn!("envelope convexification moved a point by {hull_adjustment:.3e}");
    }
    Ok(EnvelopeBounds { grid, upper, lower, n: Some(n), hull_adjustment })
}

/// The large-market envelope `Ū^∞(s) = s`.
pub fn asymptotic_envelope(k: usize) -> EnvelopeBounds {
    let grid = unit_grid(k);
    let lower = grid.iter().map(|&s| lower_bound(s)).collect();
    EnvelopeBounds { upper: grid.clone(), grid, lower, n: None, hull_adjustment: 0.0 }
}

/// Probability that one agent receives the good under the efficient rule.
pub fn efficient_value(engine: &Engine, n: usize) -> Result<f64> {
    let agg = engine.others(n)?;
    let d = engine.distribution();
    let (lo, hi) = d.support();
    let mut total = 0.0;
    for state in State::BOTH {
        let g = agg.get(state);
        total += 0.5
            * d.integrate(
                |s| {
                    let t = if s <= 0.0 { f64::INFINITY } else { (-s).ln_1p() - s.ln() };
                    state.tilt(s) * g.tail_prob_log(t)
                },
                lo,
                hi,
                &[0.5],
            );
    }
    Ok(total)
}

/// Writes `(s, lower, upper)` rows to any writer.
pub fn write_envelope<W: Write>(bounds: &EnvelopeBounds, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["s", "lower", "upper"])?;
    for j in 0..bounds.len() {
        w.write_record([fmt(bounds.grid[j]), fmt(bounds.lower[j]), fmt(bounds.upper[j])])?;
    }
    w.flush()?;
    Ok(())
}
