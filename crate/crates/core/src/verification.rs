//! Independent checks of constructed mechanisms: interim feasibility on a
//! type-by-report grid, ex-post incentive compatibility, a Monte Carlo value
//! estimate, and a brute-force convex order oracle.

use serde::Serialize;

use crate::distributions::{log_lr, sample, State};
use crate::error::{Error, Result};
use crate::likelihood::{Aggregate, Engine, GridDistribution};
use crate::mechanisms::{evaluate_log, report_line, MonotoneThresholdMechanism, PieceKind};
use crate::quadrature;
use crate::rng::{self, Moments};

/// Default size of the type and report grids.
pub const DEFAULT_GRID: usize = 201;
/// Default tolerance for feasibility margins.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Smallest Monte Carlo sample accepted by [`mc_value`].
pub const MIN_SAMPLES: usize = 10_000;
/// Number of `max{0, x − t}` test functions used by the convex order check.
pub const TEST_FUNCTIONS: usize = 200;
const ENDPOINT_TOL: f64 = 1e-10;
const LOG_LR_CAP: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
    pub samples: usize,
}

impl McEstimate {
    /// Whether `value` lies within `k` standard errors of the mean.
    pub fn agrees(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.se.max(f64::EPSILON)
    }
}

/// Margins found by the checks that were run; unset fields were not checked.
#[derive(Debug, Clone, Default, Serialize)]
pub struct FeasibilityReport {
    pub ic_min_margin: Option<f64>,
    /// `(type, report)` attaining the worst IC margin.
    pub ic_worst_pair: Option<(f64, f64)>,
    pub ir_min: Option<f64>,
    pub envelope_residual: Option<f64>,
    pub monotone_x_min_slack: Option<f64>,
    pub epic_violation_mass: Option<f64>,
    pub value_mc: Option<McEstimate>,
    pub tol: f64,
    /// Interim feasibility: IC, IR, monotone allocation and the envelope formula.
    pub passed: bool,
    /// Whether the ex-post violation mass is within tolerance.
    pub epic_passed: Option<bool>,
}

impl FeasibilityReport {
    /// Combines two reports, keeping whatever each one measured.
    pub fn merge(self, other: FeasibilityReport) -> FeasibilityReport {
        let tol = self.tol.max(other.tol);
        let mut out = FeasibilityReport {
            ic_min_margin: self.ic_min_margin.or(other.ic_min_margin),
            ic_worst_pair: self.ic_worst_pair.or(other.ic_worst_pair),
            ir_min: self.ir_min.or(other.ir_min),
            envelope_residual: self.envelope_residual.or(other.envelope_residual),
            monotone_x_min_slack: self.monotone_x_min_slack.or(other.monotone_x_min_slack),
            epic_violation_mass: self.epic_violation_mass.or(other.epic_violation_mass),
            value_mc: self.value_mc.or(other.value_mc),
            tol,
            passed: false,
            epic_passed: None,
        };
        out.finish();
        out
    }

    fn finish(&mut self) {
        self.passed = self.evaluate();
        self.epic_passed = self.epic_violation_mass.map(|m| m <= self.tol);
    }

    fn evaluate(&self) -> bool {
        let tol = self.tol;
        let ok = |v: Option<f64>| v.is_none_or(|x| x >= -tol);
        ok(self.ic_min_margin)
            && ok(self.ir_min)
            && ok(self.monotone_x_min_slack)
            && self.envelope_residual.is_none_or(|r| r <= 10.0 * tol)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn support_grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    let last = (k - 1) as f64;
    (0..k).map(|j| lo + (hi - lo) * j as f64 / last).collect()
}

/// Checks participation, incentive compatibility, monotonicity of the
/// interim allocation and the envelope formula on a `grid × grid` lattice
/// of types and reports.
pub fn check_feasibility(
    mech: &MonotoneThresholdMechanism,
    engine: &Engine,
    grid: usize,
    tol: f64,
) -> Result<FeasibilityReport> {
    if grid < 2 {
        return Err(Error::Config(format!("verification grid {grid} too small")));
    }
    let agg = engine.others(mech.n)?;
    let (lo, hi) = mech.support();
    let types = support_grid(lo, hi, grid);
    let lines = types.iter().map(|&t| report_line(mech, &agg, t)).collect::<Result<Vec<_>>>()?;
    let truthful: Vec<f64> = types.iter().zip(&lines).map(|(s, (a, b))| s * a - b).collect();

    let mut ic = f64::INFINITY;
    let mut worst = (lo, lo);
    for (i, &s) in types.iter().enumerate() {
        for (j, (a, b)) in lines.iter().enumerate() {
            let margin = truthful[i] - (s * a - b);
            if margin < ic {
                ic = margin;
                worst = (s, types[j]);
            }
        }
    }
    let ir = truthful.iter().copied().fold(f64::INFINITY, f64::min);
    let mono = lines.windows(2).map(|w| w[1].0 - w[0].0).fold(f64::INFINITY, f64::min);

    let cuts: Vec<f64> = mech.pieces.iter().map(|p| p.hi).collect();
    let slope = |t: f64| report_line(mech, &agg, t).map_or(f64::NAN, |l| l.0);
    let mut integral = 0.0;
    let mut residual: f64 = 0.0;
    for j in 1..types.len() {
        let (a, b) = (types[j - 1], types[j]);
        let mut knots = vec![a];
        knots.extend(cuts.iter().copied().filter(|&c| c > a && c < b));
        knots.push(b);
        integral += knots.windows(2).map(|w| quadrature::gauss(slope, w[0], w[1])).sum::<f64>();
        residual = residual.max((truthful[j] - truthful[0] - integral).abs());
    }

    let mut report = FeasibilityReport {
        ic_min_margin: Some(ic),
        ic_worst_pair: Some(worst),
        ir_min: Some(ir),
        envelope_residual: Some(residual),
        monotone_x_min_slack: Some(if mono.is_finite() { mono } else { 0.0 }),
        tol,
        ..Default::default()
    };
    report.finish();
    Ok(report)
}

/// Smallest and largest allocation over all reports when the others' log
/// likelihood ratio is `y`.
fn allocation_range(mech: &MonotoneThresholdMechanism, y: f64) -> (f64, f64) {
    let mut inf = f64::INFINITY;
    let mut sup = f64::NEG_INFINITY;
    for p in &mech.pieces {
        let (a, b) = match p.kind {
            PieceKind::Exclude => (0.0, 0.0),
            PieceKind::Pooled { .. } => {
                let x = evaluate_log(p, p.lo, y);
                (x, x)
            }
            PieceKind::EfficientTail => {
                let at = |s: f64| if log_lr(s).max(-LOG_LR_CAP) + y >= 0.0 { 1.0 } else { 0.0 };
                (at(p.lo), at(p.hi))
            }
        };
        inf = inf.min(a);
        sup = sup.max(b);
    }
    (inf, sup)
}

fn capped_log_lr(s: f64) -> f64 {
    log_lr(s).clamp(-LOG_LR_CAP, LOG_LR_CAP)
}

/// `P[y ∈ (a, b)]` under one state's aggregate.
fn interval_prob(g: &GridDistribution, a: f64, b: f64) -> f64 {
    let upper = |t: f64| if t == f64::NEG_INFINITY { g.total_mass() } else { g.tail_prob_log(t) };
    let lower = |t: f64| if t == f64::INFINITY { 0.0 } else { g.tail_prob_log(t) };
    (upper(a) - lower(b)).max(0.0)
}

/// Probability, over the others' log likelihood ratio, that type `s` faces
/// an ex-post profitable deviation.
fn violation_prob(mech: &MonotoneThresholdMechanism, agg: &Aggregate, state: State, s: f64) -> f64 {
    let Some(own) = mech.piece_at(s) else { return 0.0 };
    let ls = capped_log_lr(s);
    let violated = |y: f64| {
        let x = evaluate_log(own, s, y);
        let (inf, sup) = allocation_range(mech, y);
        if ls + y >= 0.0 {
            x < sup
        } else {
            x > inf
        }
    };
    if agg.m() == 0 {
        return if violated(0.0) { 1.0 } else { 0.0 };
    }
    let mut breaks = vec![-ls];
    for p in &mech.pieces {
        match p.kind {
            PieceKind::Exclude => {}
            PieceKind::Pooled { tau, .. } => {
                if tau > 0.0 {
                    breaks.push(tau.ln());
                }
            }
            PieceKind::EfficientTail => {
                breaks.push(-capped_log_lr(p.lo));
                breaks.push(-capped_log_lr(p.hi));
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let g = agg.get(state);
    let mut edges = vec![f64::NEG_INFINITY];
    edges.extend(breaks);
    edges.push(f64::INFINITY);
    let mut total = 0.0;
    for w in edges.windows(2) {
        let mid = match (w[0].is_finite(), w[1].is_finite()) {
            (true, true) => 0.5 * (w[0] + w[1]),
            (false, true) => w[1] - 1.0,
            (true, false) => w[0] + 1.0,
            (false, false) => 0.0,
        };
        if violated(mid) {
            total += interval_prob(g, w[0], w[1]);
        }
    }
    total
}

/// Probability of signal profiles at which some agent would gain by
/// misreporting after seeing everyone's signals.
pub fn check_epic(mech: &MonotoneThresholdMechanism, engine: &Engine, tol: f64) -> Result<FeasibilityReport> {
    let agg = engine.others(mech.n)?;
    let d = engine.distribution();
    let (lo, hi) = mech.support();
    let cuts: Vec<f64> = mech.pieces.iter().map(|p| p.hi).collect();
    let mut mass = 0.0;
    for state in State::BOTH {
        mass += 0.5 * d.integrate(|s| state.tilt(s) * violation_prob(mech, &agg, state, s), lo, hi, &cuts);
    }
    let mut report =
        FeasibilityReport { epic_violation_mass: Some(mass.max(0.0)), tol, ..Default::default() };
    report.finish();
    Ok(report)
}

/// Monte Carlo estimate of the per-agent allocation probability.
///
/// Each draw picks the state by a fair coin, draws `n` signals and averages
/// the allocation over agents. Chunks use independent streams, so the result
/// depends only on `seed` and `workers`.
pub fn mc_value(
    mech: &MonotoneThresholdMechanism,
    engine: &Engine,
    samples: usize,
    seed: u64,
    workers: usize,
) -> Result<McEstimate> {
    use rand::Rng;
    if samples < MIN_SAMPLES {
        return Err(Error::Config(format!("need at least {MIN_SAMPLES} samples, got {samples}")));
    }
    let d = engine.distribution();
    let n = mech.n;
    let parts = rng::run_chunks(seed, samples, workers, |_, rng, count| {
        let mut m = Moments::default();
        let mut s = vec![0.0; n];
        let mut l = vec![0.0; n];
        for _ in 0..count {
            let state = if rng.gen::<bool>() { State::Plus } else { State::Minus };
            for j in 0..n {
                s[j] = sample(d, state, rng);
                l[j] = capped_log_lr(s[j]);
            }
            let sum: f64 = l.iter().sum();
            let mut x = 0.0;
            for j in 0..n {
                if let Some(p) = mech.piece_at(s[j]) {
                    x += evaluate_log(p, s[j], sum - l[j]);
                }
            }
            m.push(x / n as f64);
        }
        m
    });
    let total = parts.iter().fold(Moments::default(), |acc, m| acc.merge(m));
    Ok(McEstimate { mean: total.mean(), se: total.std_error(), samples })
}

/// Decides, for signed measures `μ` and `ν` on the knots `x` with
/// cumulative masses `h = μ([x₀, xⱼ])` and `g = ν([x₀, xⱼ])`, whether `g`
/// majorizes `h` and whether `μ` dominates `ν` in convex order.
///
/// Returns `(majorizes, convex_order)`.
pub fn convex_order_vs_majorization(x: &[f64], h: &[f64], g: &[f64]) -> Result<(bool, bool)> {
    let k = x.len();
    if k == 0 || h.len() != k || g.len() != k {
        return Err(Error::Config("knots and cumulative masses must have the same nonzero length".into()));
    }
    if x.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("knots must be strictly increasing".into()));
    }
    if (h[k - 1] - g[k - 1]).abs() > ENDPOINT_TOL {
        return Err(Error::EndpointMismatch { h: h[k - 1], g: g[k - 1] });
    }
    let scale = 1.0 + (x[k - 1] - x[0]) * h.iter().chain(g).fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-10 * scale;

    let mut ih = 0.0;
    let mut ig = 0.0;
    let mut majorizes = true;
    for j in 1..k {
        let dx = x[j] - x[j - 1];
        ih += h[j - 1] * dx;
        ig += g[j - 1] * dx;
        if ih < ig - tol {
            majorizes = false;
        }
    }
    if (ih - ig).abs() > tol {
        majorizes = false;
    }

    let atoms = |c: &[f64]| -> Vec<f64> {
        (0..k).map(|j| if j == 0 { c[0] } else { c[j] - c[j - 1] }).collect()
    };
    let (mu, nu) = (atoms(h), atoms(g));
    let integral = |m: &[f64], f: &dyn Fn(f64) -> f64| -> f64 { m.iter().zip(x).map(|(w, &s)| w * f(s)).sum() };
    let dominates = |f: &dyn Fn(f64) -> f64| integral(&mu, f) >= integral(&nu, f) - tol;
    let mut convex = dominates(&|_| 1.0) && dominates(&|_| -1.0) && dominates(&|s| s) && dominates(&|s| -s);
    let stride = k.div_ceil(TEST_FUNCTIONS).max(1);
    for t in x.iter().step_by(stride).chain(std::iter::once(&x[k - 1])) {
        if !convex {
            break;
        }
        convex = dominates(&|s| (s - t).max(0.0));
    }
    Ok((majorizes, convex))
}
