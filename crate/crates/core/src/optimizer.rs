//! The reduced designer problem: maximize a linear functional of the
//! indirect utility over convex functions sandwiched between the bounds.

use std::path::Path;

use microlp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem, SolveOutcome};
use serde::Serialize;

use crate::distributions::BeliefDistribution;
use crate::error::{Error, Result};
use crate::first_best::{asymptotic_envelope, fmt, interpolate, unit_grid, EnvelopeBounds};
use crate::quadrature;

/// Slack allowed when re-optimizing for the pointwise-lowest optimum.
pub const TIE_BREAK_SLACK: f64 = 1e-9;
/// Distance from a bound below which a grid value counts as on it.
pub const BOUND_TOL: f64 = 1e-7;
/// Slope change above which a grid point counts as a kink.
pub const KINK_TOL: f64 = 1e-3;

/// Chord tolerance for [`check_extreme_structure`] on a `k`-point grid.
pub fn structure_tol(k: usize) -> f64 {
    let h = 1.0 / (k - 1) as f64;
    (2.0 * h * h).max(1e-6)
}

/// Weight `g(s) = −3(1 − 2s)f(s) − 2s(1 − s)f′(s)` of the designer's value.
pub fn g_weight(d: &BeliefDistribution, s: f64) -> f64 {
    -3.0 * (1.0 - 2.0 * s) * d.density(s) - 2.0 * s * (1.0 - s) * d.density_deriv(s)
}

/// Linear functional `V(U) = ∫ g U + atom_hi·U(s̄) + atom_lo·U(s̲)` on a
/// grid over `[0, 1]`, discretized for piecewise-linear `U`.
#[derive(Debug, Clone, Serialize)]
pub struct ObjectiveWeights {
    pub grid: Vec<f64>,
    pub interior_weight: Vec<f64>,
    pub atom_lo: f64,
    pub atom_hi: f64,
    pub support: (f64, f64),
    /// `V(U) = Σ_j coefficients[j]·U_j` for `U` linear between grid points.
    pub coefficients: Vec<f64>,
}

impl ObjectiveWeights {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// `V` of a grid-sampled utility.
    pub fn value(&self, u: &[f64]) -> f64 {
        self.coefficients.iter().zip(u).map(|(c, u)| c * u).sum()
    }

    /// All-zero weights; every feasible utility is optimal.
    pub fn zero(k: usize) -> Self {
        Self {
            grid: unit_grid(k),
            interior_weight: vec![0.0; k],
            atom_lo: 0.0,
            atom_hi: 0.0,
            support: (0.0, 1.0),
            coefficients: vec![0.0; k],
        }
    }
}

/// Objective weights for `d` on a `k`-point grid.
pub fn objective_weights(d: &BeliefDistribution, k: usize) -> ObjectiveWeights {
    let grid = unit_grid(k);
    let (lo, hi) = d.support();
    let interior_weight: Vec<f64> =
        grid.iter().map(|&s| if d.in_support(s) { g_weight(d, s) } else { 0.0 }).collect();
    let atom_lo = -2.0 * lo * (1.0 - lo) * d.density(lo);
    let atom_hi = 2.0 * hi * (1.0 - hi) * d.density(hi);

    let cuts = d.breakpoints();
    let h = grid[1] - grid[0];
    let mut coefficients = vec![0.0; k];
    for j in 0..k - 1 {
        let (a, b) = (grid[j].max(lo), grid[j + 1].min(hi));
        if b <= a {
            continue;
        }
        let (left, right) = (grid[j], grid[j + 1]);
        let inner: Vec<f64> = cuts.iter().copied().filter(|&c| c > a && c < b).collect();
        coefficients[j] +=
            quadrature::composite(|s| g_weight(d, s) * (right - s) / h, a, b, &inner, 1);
        coefficients[j + 1] +=
            quadrature::composite(|s| g_weight(d, s) * (s - left) / h, a, b, &inner, 1);
    }
    for (s, w) in [(lo, atom_lo), (hi, atom_hi)] {
        if w == 0.0 {
            continue;
        }
        let j = ((s / h).floor() as usize).min(k - 2);
        let t = (s - grid[j]) / h;
        coefficients[j] += w * (1.0 - t);
        coefficients[j + 1] += w * t;
    }
    ObjectiveWeights { grid, interior_weight, atom_lo, atom_hi, support: (lo, hi), coefficients }
}

/// Grid-sampled indirect utility.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndirectUtility {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl IndirectUtility {
    pub fn at(&self, s: f64) -> f64 {
        interpolate(&self.grid, &self.values, s)
    }

    /// Checks convexity, monotonicity and the 2-Lipschitz bound.
    pub fn check_shape(&self) -> Result<()> {
        let u = &self.values;
        let x = &self.grid;
        for j in 1..u.len() {
            let du = u[j] - u[j - 1];
            let dx = x[j] - x[j - 1];
            if du < -1e-9 {
                return Err(Error::NonConvexUtility(format!("decreasing at s = {:.6}", x[j])));
            }
            if du > 2.0 * dx + 1e-9 {
                return Err(Error::NonConvexUtility(format!("slope above 2 at s = {:.6}", x[j])));
            }
            if j + 1 < u.len() && u[j - 1] - 2.0 * u[j] + u[j + 1] < -1e-9 {
                return Err(Error::NonConvexUtility(format!("concave kink at s = {:.6}", x[j])));
            }
        }
        Ok(())
    }

    /// Shape plus `max{0, 2s − 1} ≤ U ≤ Ū`.
    pub fn check(&self, bounds: &EnvelopeBounds) -> Result<()> {
        self.check_shape()?;
        self.check_between(bounds, |j| interpolate(&bounds.grid, &bounds.lower, self.grid[j]))
    }

    /// Shape plus participation `0 ≤ U ≤ Ū`, the constraints every
    /// feasible mechanism meets (the `2s − 1` floor only binds at optima).
    pub fn check_feasible(&self, bounds: &EnvelopeBounds) -> Result<()> {
        self.check_shape()?;
        self.check_between(bounds, |_| 0.0)
    }

    fn check_between(&self, bounds: &EnvelopeBounds, floor: impl Fn(usize) -> f64) -> Result<()> {
        for (j, (&s, &u)) in self.grid.iter().zip(&self.values).enumerate() {
            let lo = floor(j);
            let hi = bounds.upper_at(s);
            if u < lo - 1e-8 {
                return Err(Error::NonConvexUtility(format!(
                    "U({s:.6}) = {u:.3e} below the floor {lo:.3e}"
                )));
            }
            if u > hi + 1e-8 {
                return Err(Error::NonConvexUtility(format!(
                    "U({s:.6}) = {u:.6} above the efficient envelope {hi:.6}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LpStats {
    pub variables: usize,
    pub constraints: usize,
    pub objective: f64,
    pub tie_break_sum: f64,
}

/// Optimal utility of the reduced problem and its value.
#[derive(Debug, Clone, Serialize)]
pub struct ReducedSolution {
    pub utility: IndirectUtility,
    pub value: f64,
    pub stats: LpStats,
}

fn build_lp(
    objective: &[f64],
    direction: OptimizationDirection,
    bounds: &EnvelopeBounds,
) -> (Problem, Vec<microlp::Variable>, usize) {
    let k = bounds.len();
    let mut lp = Problem::new(direction);
    let vars: Vec<_> = (0..k)
        .map(|j| {
            let lo = bounds.lower[j];
            lp.add_var(objective[j], (lo, bounds.upper[j].max(lo)))
        })
        .collect();
    // Convexity makes the increments nondecreasing, so monotonicity and the
    // Lipschitz bound only bind at the first and last step.
    let step = |j: usize| -> LinearExpr { [(vars[j], 1.0), (vars[j - 1], -1.0)].into_iter().collect() };
    lp.add_constraint(step(1), ComparisonOp::Ge, 0.0);
    lp.add_constraint(step(k - 1), ComparisonOp::Le, 2.0 * (bounds.grid[k - 1] - bounds.grid[k - 2]));
    let mut rows = 2;
    for j in 1..k - 1 {
        let curve: LinearExpr =
            [(vars[j - 1], 1.0), (vars[j], -2.0), (vars[j + 1], 1.0)].into_iter().collect();
        lp.add_constraint(curve, ComparisonOp::Ge, 0.0);
        rows += 1;
    }
    (lp, vars, rows)
}

fn run(lp: &Problem) -> Result<microlp::Solution> {
    match lp.solve() {
        Ok(SolveOutcome::Solution(s)) => Ok(s),
        Ok(other) => Err(Error::InfeasibleLp(format!("solver stopped early: {other:?}"))),
        Err(e) => Err(Error::InfeasibleLp(e.to_string())),
    }
}

/// Maximizes `V` over convex, increasing, 2-Lipschitz `U` between the
/// bounds; among optima returns the pointwise-lowest one.
pub fn solve_reduced(weights: &ObjectiveWeights, bounds: &EnvelopeBounds) -> Result<ReducedSolution> {
    let k = bounds.len();
    if weights.len() != k || weights.grid.iter().zip(&bounds.grid).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(Error::Config("objective and envelope grids differ".into()));
    }
    if let Some(j) = (0..k).find(|&j| bounds.upper[j] < bounds.lower[j] - 1e-9) {
        return Err(Error::InfeasibleLp(format!("bounds cross at s = {}", bounds.grid[j])));
    }
    let (lp, vars, rows) = build_lp(&weights.coefficients, OptimizationDirection::Maximize, bounds);
    let first = run(&lp)?;
    let best = first.objective();

    let ones = vec![1.0; k];
    let (mut lp2, vars2, _) = build_lp(&ones, OptimizationDirection::Minimize, bounds);
    let target: LinearExpr =
        vars2.iter().zip(&weights.coefficients).map(|(&v, &c)| (v, c)).collect();
    lp2.add_constraint(target, ComparisonOp::Ge, best - TIE_BREAK_SLACK * best.abs().max(1.0));
    let (values, tie_break_sum) = match run(&lp2) {
        Ok(sol) => (vars2.iter().map(|&v| sol[v]).collect::<Vec<f64>>(), sol.objective()),
        Err(e) => {
            log::warn!("tie-break stage failed ({e}); keeping the first-stage optimum");
            let v: Vec<f64> = vars.iter().map(|&v| first[v]).collect();
            let sum = v.iter().sum();
            (v, sum)
        }
    };
    let values: Vec<f64> = values
        .iter()
        .enumerate()
        .map(|(j, &u)| u.clamp(bounds.lower[j], bounds.upper[j].max(bounds.lower[j])))
        .collect();
    let value = weights.value(&values);
    Ok(ReducedSolution {
        utility: IndirectUtility { grid: bounds.grid.clone(), values },
        value,
        stats: LpStats { variables: k, constraints: rows, objective: best, tie_break_sum },
    })
}

/// The reduced problem with the large-market envelope `Ū^∞(s) = s`.
pub fn solve_asymptotic(weights: &ObjectiveWeights) -> Result<ReducedSolution> {
    solve_reduced(weights, &asymptotic_envelope(weights.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    AtLower,
    AtUpper,
    StrictlyBetween,
}

impl RegionKind {
    pub fn tag(self) -> &'static str {
        match self {
            RegionKind::AtLower => "at_lower",
            RegionKind::AtUpper => "at_upper",
            RegionKind::StrictlyBetween => "strictly_between",
        }
    }
}

/// Maximal run of grid points `[start, end]` (inclusive) of one kind.
/// Strictly-between regions are further cut at kinks into linear segments.
#[derive(Debug, Clone, Serialize)]
pub struct Region {
    pub kind: RegionKind,
    pub start: usize,
    pub end: usize,
    pub s_lo: f64,
    pub s_hi: f64,
    /// Slope and intercept `U = a·s − b` for linear segments.
    pub line: Option<(f64, f64)>,
    pub chord_deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StructureReport {
    pub regions: Vec<Region>,
    pub kinks: Vec<f64>,
    /// Kinks shared by two strictly-between segments.
    pub adjacent_between: Vec<f64>,
}

impl StructureReport {
    /// Per-grid-point region tags.
    pub fn tags(&self, k: usize) -> Vec<&'static str> {
        let mut out = vec![""; k];
        for r in &self.regions {
            for tag in &mut out[r.start..=r.end] {
                if tag.is_empty() {
                    *tag = r.kind.tag();
                }
            }
        }
        out
    }

    /// Start of the first region not at zero utility.
    pub fn exclusion_end(&self, u: &IndirectUtility) -> f64 {
        let j = u.values.iter().position(|&v| v > BOUND_TOL).unwrap_or(u.values.len());
        u.grid[j.saturating_sub(1)]
    }
}

/// Splits the grid into regions on the lower bound, on the upper bound and
/// strictly between, and checks that the between parts are piecewise linear
/// with isolated kinks.
pub fn check_extreme_structure(
    u: &IndirectUtility,
    bounds: &EnvelopeBounds,
    tol: f64,
) -> Result<StructureReport> {
    let k = u.values.len();
    let x = &u.grid;
    let v = &u.values;
    let raw: Vec<Option<RegionKind>> = (0..k)
        .map(|j| {
            let on_lo = (v[j] - bounds.lower[j]).abs() <= BOUND_TOL;
            let on_hi = (v[j] - bounds.upper[j]).abs() <= BOUND_TOL;
            match (on_lo, on_hi) {
                (true, true) => None,
                (true, false) => Some(RegionKind::AtLower),
                (false, true) => Some(RegionKind::AtUpper),
                (false, false) => Some(RegionKind::StrictlyBetween),
            }
        })
        .collect();
    let mut kinds = vec![RegionKind::AtUpper; k];
    let first = raw.iter().flatten().next().copied();
    let mut last = first.unwrap_or(RegionKind::AtUpper);
    for j in 0..k {
        if let Some(kind) = raw[j] {
            last = kind;
        }
        kinds[j] = raw[j].unwrap_or(last);
    }

    let bent: Vec<bool> = (0..k)
        .map(|j| {
            j > 0
                && j + 1 < k
                && kinds[j] == RegionKind::StrictlyBetween
                && (v[j + 1] - v[j]) / (x[j + 1] - x[j]) - (v[j] - v[j - 1]) / (x[j] - x[j - 1])
                    > KINK_TOL
        })
        .collect();
    // Long runs of bent points are curvature rather than kinks; leaving them
    // uncut lets the chord check reject them.
    let mut kinks = Vec::new();
    let mut j = 0;
    while j < k {
        if !bent[j] {
            j += 1;
            continue;
        }
        let run_start = j;
        while j < k && bent[j] {
            j += 1;
        }
        if j - run_start <= 2 {
            kinks.extend(run_start..j);
        }
    }

    let mut regions = Vec::new();
    let mut start = 0;
    for j in 1..=k {
        let boundary = j == k || kinds[j] != kinds[start];
        if !boundary {
            continue;
        }
        let end = j - 1;
        let kind = kinds[start];
        if kind == RegionKind::StrictlyBetween {
            // Between points extend to the neighbouring bound points so the
            // segment includes its contact points.
            let lo = start.saturating_sub(1);
            let hi = (end + 1).min(k - 1);
            let mut cuts: Vec<usize> = vec![lo];
            cuts.extend(kinks.iter().copied().filter(|&q| q > lo && q < hi));
            cuts.push(hi);
            for w in cuts.windows(2) {
                regions.push(linear_segment(x, v, w[0], w[1], tol)?);
            }
        } else {
            regions.push(Region {
                kind,
                start,
                end,
                s_lo: x[start],
                s_hi: x[end],
                line: None,
                chord_deviation: 0.0,
            });
        }
        start = j;
    }
    let mut adjacent = Vec::new();
    for w in regions.windows(2) {
        if w[0].kind == RegionKind::StrictlyBetween && w[1].kind == RegionKind::StrictlyBetween {
            adjacent.push(w[0].s_hi);
        }
    }
    Ok(StructureReport {
        regions,
        kinks: kinks.iter().map(|&j| x[j]).collect(),
        adjacent_between: adjacent,
    })
}

fn linear_segment(x: &[f64], v: &[f64], a: usize, b: usize, tol: f64) -> Result<Region> {
    let slope = (v[b] - v[a]) / (x[b] - x[a]);
    let dev = (a..=b)
        .map(|j| (v[j] - (v[a] + slope * (x[j] - x[a]))).abs())
        .fold(0.0, f64::max);
    if dev > tol {
        return Err(Error::StructureViolation(format!(
            "utility on [{:.6}, {:.6}] deviates {dev:.3e} from its chord",
            x[a], x[b]
        )));
    }
    Ok(Region {
        kind: RegionKind::StrictlyBetween,
        start: a,
        end: b,
        s_lo: x[a],
        s_hi: x[b],
        line: Some((slope, slope * x[a] - v[a])),
        chord_deviation: dev,
    })
}

/// Writes `(s, U, lower, upper, region)` rows.
pub fn write_solution_csv(
    path: &Path,
    u: &IndirectUtility,
    bounds: &EnvelopeBounds,
    report: &StructureReport,
) -> Result<()> {
    let tags = report.tags(u.values.len());
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["s", "U", "lower", "upper", "region"])?;
    for j in 0..u.values.len() {
        w.write_record([
            fmt(u.grid[j]),
            fmt(u.values[j]),
            fmt(bounds.lower[j]),
            fmt(bounds.upper[j]),
            tags[j].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::first_best::efficient_envelope;
    use crate::likelihood::{Engine, GridSpec};
    use approx::assert_abs_diff_eq;

    fn uniform_pair(k: usize) -> (ObjectiveWeights, EnvelopeBounds) {
        let d = BeliefDistribution::uniform();
        let e = Engine::new(d.clone(), GridSpec::default()).unwrap();
        (objective_weights(&d, k), efficient_envelope(&e, 2, k).unwrap())
    }

    #[test]
    fn uniform_weights() {
        let w = objective_weights(&BeliefDistribution::uniform(), 11);
        assert_abs_diff_eq!(w.interior_weight[5], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w.interior_weight[10], 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w.interior_weight[0], -3.0, epsilon = 1e-15);
        assert_eq!((w.atom_lo, w.atom_hi), (0.0, 0.0));
    }

    #[test]
    fn value_of_square_is_one_half() {
        let w = objective_weights(&BeliefDistribution::uniform(), 2001);
        let u: Vec<f64> = w.grid.iter().map(|s| s * s).collect();
        assert_abs_diff_eq!(w.value(&u), 0.5, epsilon = 1e-6);
    }

    #[test]
    fn log_concave_ratio_is_monotone() {
        // g / (2s(1−s)f) = −3(1−2s)/(2s(1−s)) − f′/f rises for log-concave f.
        for d in [
            BeliefDistribution::uniform(),
            BeliefDistribution::beta_symmetric(2.0).unwrap(),
            BeliefDistribution::truncated_normal(0.2).unwrap(),
        ] {
            let w = objective_weights(&d, 1001);
            let ratio: Vec<f64> = (1..1000)
                .map(|j| {
                    let s = w.grid[j];
                    w.interior_weight[j] / (2.0 * s * (1.0 - s) * d.density(s))
                })
                .collect();
            assert!(ratio.windows(2).all(|p| p[1] - p[0] >= -1e-9));
        }
    }

    #[test]
    fn uniform_pair_optimum() {
        let (w, b) = uniform_pair(401);
        let sol = solve_reduced(&w, &b).unwrap();
        sol.utility.check(&b).unwrap();
        let report = check_extreme_structure(&sol.utility, &b, structure_tol(401)).unwrap();
        let kinds: Vec<RegionKind> = report.regions.iter().map(|r| r.kind).collect();
        assert_eq!(
            kinds,
            vec![RegionKind::AtLower, RegionKind::StrictlyBetween, RegionKind::AtUpper]
        );
        let mid = &report.regions[1];
        assert!((mid.s_lo - 0.375).abs() <= 0.005, "{}", mid.s_lo);
        assert!((mid.s_hi - 0.75).abs() <= 0.005, "{}", mid.s_hi);
        assert!(sol.value > 0.5 + 1e-3);
    }

    #[test]
    fn zero_weights_give_lower_bound() {
        let (_, b) = uniform_pair(101);
        let sol = solve_reduced(&ObjectiveWeights::zero(101), &b).unwrap();
        for (u, l) in sol.utility.values.iter().zip(&b.lower) {
            assert_abs_diff_eq!(u, l, epsilon = 1e-8);
        }
    }

    #[test]
    fn structure_of_bounds_themselves() {
        let (_, b) = uniform_pair(201);
        let upper = IndirectUtility { grid: b.grid.clone(), values: b.upper.clone() };
        let r = check_extreme_structure(&upper, &b, 1e-6).unwrap();
        assert_eq!(r.regions.len(), 1);
        assert_eq!(r.regions[0].kind, RegionKind::AtUpper);
        let lower = IndirectUtility { grid: b.grid.clone(), values: b.lower.clone() };
        let r = check_extreme_structure(&lower, &b, 1e-6).unwrap();
        assert!(r.regions.iter().all(|r| r.kind == RegionKind::AtLower));
    }

    #[test]
    fn curved_between_region_is_a_violation() {
        let (_, b) = uniform_pair(201);
        let values: Vec<f64> = b.grid.iter().map(|&s| 0.5 * (s * s + (2.0 * s - 1.0).max(0.0))).collect();
        let u = IndirectUtility { grid: b.grid.clone(), values };
        assert!(matches!(
            check_extreme_structure(&u, &b, 1e-6),
            Err(Error::StructureViolation(_))
        ));
    }

    #[test]
    fn asymptotic_uniform_solution_reaches_one() {
        let w = objective_weights(&BeliefDistribution::uniform(), 401);
        let sol = solve_asymptotic(&w).unwrap();
        assert_abs_diff_eq!(*sol.utility.values.last().unwrap(), 1.0, epsilon = 1e-9);
        // Line through (1/4, 0) and (1, 1): value 9/16.
        assert_abs_diff_eq!(sol.value, 9.0 / 16.0, epsilon = 1e-4);
        for (s, u) in sol.utility.grid.iter().zip(&sol.utility.values) {
            assert_abs_diff_eq!(*u, (4.0 * (s - 0.25) / 3.0).max(0.0), epsilon = 1e-6);
        }
    }
}
