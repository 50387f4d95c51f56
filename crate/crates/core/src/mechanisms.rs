//! Monotone threshold mechanisms: each type interval either excludes, pools
//! behind a constant threshold on the others' likelihood ratio, or follows
//! the efficient rule.

use serde::{Deserialize, Serialize};

use crate::distributions::{lr_point, BeliefDistribution, DistributionSpec, State};
use crate::error::{Error, Result};
use crate::first_best::{
    efficient_envelope, efficient_slope, efficient_utility, lower_bound, unit_grid,
};
use crate::likelihood::{Aggregate, Engine};
use crate::optimizer::{
    check_extreme_structure, g_weight, structure_tol, IndirectUtility, RegionKind,
    StructureReport,
};
use crate::quadrature;

/// Tolerance used when checking that a line stays inside the feasible band.
pub const LINE_TOL: f64 = 1e-6;
const BISECTION_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PieceKind {
    Exclude,
    Pooled { kappa: f64, tau: f64 },
    EfficientTail,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPiece {
    pub lo: f64,
    pub hi: f64,
    pub kind: PieceKind,
}

impl ThresholdPiece {
    pub fn new(lo: f64, hi: f64, kind: PieceKind) -> Self {
        Self { lo, hi, kind }
    }

    pub fn contains(&self, s: f64) -> bool {
        s >= self.lo && s <= self.hi
    }
}

/// Ordered pieces covering the support, for a market of `n` agents.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneThresholdMechanism {
    pub pieces: Vec<ThresholdPiece>,
    pub n: usize,
    pub distribution: DistributionSpec,
}

impl MonotoneThresholdMechanism {
    /// Builds a mechanism after checking that the pieces tile `support`.
    pub fn new(
        pieces: Vec<ThresholdPiece>,
        n: usize,
        d: &BeliefDistribution,
    ) -> Result<Self> {
        let mech = Self { pieces, n, distribution: d.spec().clone() };
        mech.check_partition(d.support())?;
        Ok(mech)
    }

    /// One kind of piece on the whole support.
    pub fn uniform_kind(kind: PieceKind, n: usize, d: &BeliefDistribution) -> Self {
        let (lo, hi) = d.support();
        Self { pieces: vec![ThresholdPiece::new(lo, hi, kind)], n, distribution: d.spec().clone() }
    }

    pub fn efficient(n: usize, d: &BeliefDistribution) -> Self {
        Self::uniform_kind(PieceKind::EfficientTail, n, d)
    }

    pub fn exclude_all(n: usize, d: &BeliefDistribution) -> Self {
        Self::uniform_kind(PieceKind::Exclude, n, d)
    }

    fn check_partition(&self, (lo, hi): (f64, f64)) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("invalid mechanism: {msg}")));
        if self.n == 0 {
            return bad("market size must be at least 1".into());
        }
        let Some(first) = self.pieces.first() else {
            return bad("no pieces".into());
        };
        let last = self.pieces.last().expect("nonempty");
        if (first.lo - lo).abs() > 1e-9 || (last.hi - hi).abs() > 1e-9 {
            return bad(format!(
                "pieces cover [{}, {}] but the support is [{lo}, {hi}]",
                first.lo, last.hi
            ));
        }
        for p in &self.pieces {
            if p.hi < p.lo {
                return bad(format!("empty interval [{}, {}]", p.lo, p.hi));
            }
            if let PieceKind::Pooled { kappa, tau } = p.kind {
                if !(0.0..=1.0).contains(&kappa) || !(tau >= 0.0) {
                    return bad(format!("pooled piece with kappa = {kappa}, tau = {tau}"));
                }
            }
        }
        for w in self.pieces.windows(2) {
            if (w[0].hi - w[1].lo).abs() > 1e-9 {
                return bad(format!("gap or overlap at {} / {}", w[0].hi, w[1].lo));
            }
        }
        Ok(())
    }

    /// Piece responsible for type `s`; shared endpoints go to the upper piece.
    pub fn piece_at(&self, s: f64) -> Option<&ThresholdPiece> {
        self.pieces.iter().rev().find(|p| p.contains(s))
    }

    /// Support spanned by the pieces.
    pub fn support(&self) -> (f64, f64) {
        (self.pieces[0].lo, self.pieces[self.pieces.len() - 1].hi)
    }

    /// `(s_min, s_max)` if the pieces have the two-threshold shape.
    pub fn thresholds(&self) -> Option<(f64, f64)> {
        let (lo, hi) = self.support();
        let mut s_min = lo;
        let mut s_max = hi;
        let mut stage = 0;
        for p in &self.pieces {
            let rank = match p.kind {
                PieceKind::Exclude => 0,
                PieceKind::Pooled { .. } => 1,
                PieceKind::EfficientTail => 2,
            };
            if rank < stage {
                return None;
            }
            if rank == 1 && stage == 1 {
                return None;
            }
            match rank {
                0 => s_min = p.hi,
                1 => {
                    s_min = p.lo;
                    s_max = p.hi;
                }
                _ => {
                    if stage < 2 {
                        s_max = p.lo;
                    }
                }
            }
            stage = rank;
        }
        Some((s_min, s_max))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&MechanismFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MechanismFile = serde_json::from_str(text)?;
        file.try_into()
    }
}

/// On-disk form `{pieces: [{interval, kind, kappa, tau}], n, distribution}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MechanismFile {
    pub pieces: Vec<PieceRecord>,
    pub n: usize,
    pub distribution: DistributionSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PieceRecord {
    pub interval: [f64; 2],
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

impl From<&MonotoneThresholdMechanism> for MechanismFile {
    fn from(m: &MonotoneThresholdMechanism) -> Self {
        let pieces = m
            .pieces
            .iter()
            .map(|p| {
                let (kind, kappa, tau) = match p.kind {
                    PieceKind::Exclude => ("exclude", None, None),
                    PieceKind::Pooled { kappa, tau } => ("pooled", Some(kappa), Some(tau)),
                    PieceKind::EfficientTail => ("efficient_tail", None, None),
                };
                PieceRecord { interval: [p.lo, p.hi], kind: kind.into(), kappa, tau }
            })
            .collect();
        Self { pieces, n: m.n, distribution: m.distribution.clone() }
    }
}

impl TryFrom<MechanismFile> for MonotoneThresholdMechanism {
    type Error = Error;

    fn try_from(file: MechanismFile) -> Result<Self> {
        let mut pieces = Vec::with_capacity(file.pieces.len());
        for r in file.pieces {
            let kind = match r.kind.as_str() {
                "exclude" => PieceKind::Exclude,
                "efficient_tail" => PieceKind::EfficientTail,
                "pooled" => PieceKind::Pooled {
                    kappa: r.kappa.ok_or_else(|| Error::Config("pooled piece needs kappa".into()))?,
                    tau: r.tau.ok_or_else(|| Error::Config("pooled piece needs tau".into()))?,
                },
                other => return Err(Error::Config(format!("unknown piece kind `{other}`"))),
            };
            pieces.push(ThresholdPiece::new(r.interval[0], r.interval[1], kind));
        }
        let mech = Self { pieces, n: file.n, distribution: file.distribution };
        let (lo, hi) = (mech.pieces.first().map_or(0.0, |p| p.lo), mech.pieces.last().map_or(1.0, |p| p.hi));
        mech.check_partition((lo, hi))?;
        Ok(mech)
    }
}

/// Slope and intercept of the utility line `a·s − b` generated by the rule
/// `κ·1{LR(others) ≥ τ}`.
pub fn slope_intercept(kappa: f64, tau: f64, engine: &Engine, n: usize) -> Result<(f64, f64)> {
    let agg = engine.others(n)?;
    Ok(line_of(&agg, kappa, tau))
}

fn line_of(agg: &Aggregate, kappa: f64, tau: f64) -> (f64, f64) {
    if kappa == 0.0 {
        return (0.0, 0.0);
    }
    let (tp, tm) = agg.tails(tau);
    (kappa * (tp + tm), kappa * tm)
}

/// Payoff line `(A, B)` of reporting `t`: the reporter of true type `s`
/// gets `s·A − B`. `A` is also the scaled interim allocation.
pub fn report_line(mech: &MonotoneThresholdMechanism, agg: &Aggregate, t: f64) -> Result<(f64, f64)> {
    let piece = mech.piece_at(t).ok_or_else(|| {
        let (lo, hi) = mech.support();
        Error::OutOfSupport { s: t, lo, hi }
    })?;
    Ok(match piece.kind {
        PieceKind::Exclude => (0.0, 0.0),
        PieceKind::Pooled { kappa, tau } => line_of(agg, kappa, tau),
        PieceKind::EfficientTail => {
            let (tp, tm) = agg.efficient_tails(t);
            (tp + tm, tm)
        }
    })
}

/// Recovers `(κ, τ)` whose rule generates the line `a·s − b`.
pub fn solve_line(a: f64, b: f64, engine: &Engine, n: usize) -> Result<(f64, f64)> {
    let agg = engine.others(n)?;
    solve_line_with(a, b, &agg, engine.grid_spec().half_range, LINE_TOL)
}

fn solve_line_with(a: f64, b: f64, agg: &Aggregate, big_l: f64, tol: f64) -> Result<(f64, f64)> {
    let infeasible = |reason: String| Err(Error::LineInfeasible { a, b, reason });
    if a.abs() <= 1e-12 && b.abs() <= 1e-12 {
        return Ok((0.0, 0.0));
    }
    if !(0.0..=2.0 + 1e-12).contains(&a) || b < -1e-12 {
        return infeasible("slope must lie in [0, 2] and intercept be nonnegative".into());
    }
    let a = a.min(2.0);
    let b = b.max(0.0);
    let mut touches_band = false;
    for s in unit_grid(201) {
        let line = a * s - b;
        if line > efficient_utility(agg, s) + tol {
            return infeasible(format!("line exceeds the efficient envelope at s = {s:.3}"));
        }
        if line >= lower_bound(s) - tol {
            touches_band = true;
        }
    }
    if !touches_band {
        return infeasible("line stays strictly below max{0, 2s - 1}".into());
    }

    // Smallest τ with T₊(τ) + T₋(τ) ≤ target, searched over log τ.
    let tau_for = |target: f64| -> Result<f64> {
        let total = |t: f64| agg.plus.tail_prob_log(t) + agg.minus.tail_prob_log(t);
        if total(-big_l) <= target {
            return Ok(0.0);
        }
        if total(big_l) > target {
            return Err(Error::NoBracket(format!(
                "allocation mass {target:.3e} is below every finite threshold's (min {:.3e})",
                total(big_l)
            )));
        }
        let (mut lo, mut hi) = (-big_l, big_l);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if total(mid) <= target {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        Ok(hi.exp())
    };

    let intercept = |kappa: f64| -> Result<(f64, f64)> {
        let tau = tau_for(a / kappa)?;
        Ok((tau, kappa * agg.minus.tail_prob(tau)))
    };
    let k_lo = (0.5 * a).max(1e-300);
    let (tau_lo, b_lo) = intercept(k_lo)?;
    if (b_lo - b).abs() <= 1e-12 {
        return Ok((k_lo, tau_lo));
    }
    let (tau_hi, b_hi) = intercept(1.0)?;
    if b > b_lo + tol || b < b_hi - tol {
        return infeasible(format!(
            "intercept outside the attainable range [{b_hi:.6}, {b_lo:.6}]"
        ));
    }
    if b <= b_hi {
        return Ok((1.0, tau_hi));
    }
    if b >= b_lo {
        return Ok((k_lo, tau_lo));
    }
    let (mut lo, mut hi) = (k_lo, 1.0);
    let mut best = (1.0, tau_hi, b_hi);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let (tau, bm) = intercept(mid)?;
        if (bm - b).abs() < (best.2 - b).abs() {
            best = (mid, tau, bm);
        }
        if bm > b {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    if 1.0 - best.0 < 1e-9 {
        return Ok((1.0, tau_hi));
    }
    Ok((best.0, best.1))
}

/// `(s_min(τ), s_max(τ))` before clamping to the support.
pub fn two_threshold_points(agg: &Aggregate, tau: f64) -> (f64, f64) {
    let (tp, tm) = agg.tails(tau);
    (tm / (tp + tm), 1.0 / (1.0 + tau))
}

fn two_threshold_with(tau: f64, agg: &Aggregate, d: &BeliefDistribution, n: usize) -> Result<MonotoneThresholdMechanism> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!("two-threshold mechanism needs tau in [0, 1], got {tau}")));
    }
    let (lo, hi) = d.support();
    let (s_min, s_max) = two_threshold_points(agg, tau);
    let s_min = s_min.clamp(lo, hi);
    let s_max = s_max.clamp(s_min, hi);
    let pieces = [
        ThresholdPiece::new(lo, s_min, PieceKind::Exclude),
        ThresholdPiece::new(s_min, s_max, PieceKind::Pooled { kappa: 1.0, tau }),
        ThresholdPiece::new(s_max, hi, PieceKind::EfficientTail),
    ];
    let mut kept: Vec<ThresholdPiece> = pieces.iter().copied().filter(|p| p.hi > p.lo).collect();
    if kept.is_empty() {
        kept.push(pieces[1]);
    }
    kept[0].lo = lo;
    let last = kept.len() - 1;
    kept[last].hi = hi;
    MonotoneThresholdMechanism::new(kept, n, d)
}

/// Exclude / Pooled(1, τ) / EfficientTail with the thresholds pinned by
/// continuity of the indirect utility.
pub fn two_threshold(tau: f64, engine: &Engine, n: usize) -> Result<MonotoneThresholdMechanism> {
    let agg = engine.others(n)?;
    two_threshold_with(tau, &agg, engine.distribution(), n)
}

/// `∫_{s_min}^{s} (s − t) g(t) dt` minus the lower boundary term.
pub fn dominance(d: &BeliefDistribution, s_min: f64, s: f64) -> f64 {
    let (lo, _) = d.support();
    let body = quadrature::composite(|t| (s - t) * g_weight(d, t), s_min, s, &d.breakpoints(), 8);
    let boundary = if s_min <= lo { 2.0 * (s - lo) * lo * (1.0 - lo) * d.density(lo) } else { 0.0 };
    body - boundary
}

/// `∫_{s_min}^{s_max} g` with both boundary terms.
pub fn sign_integral(d: &BeliefDistribution, s_min: f64, s_max: f64) -> f64 {
    let (lo, hi) = d.support();
    let body = quadrature::composite(|t| g_weight(d, t), s_min, s_max, &d.breakpoints(), 8);
    let low = if s_min <= lo { 2.0 * lo * (1.0 - lo) * d.density(lo) } else { 0.0 };
    let high = if s_max >= hi { 2.0 * hi * (1.0 - hi) * d.density(hi) } else { 0.0 };
    body - low + high
}

/// Result of the threshold search for log-concave densities.
#[derive(Debug, Clone, Serialize)]
pub struct LogConcaveSolution {
    pub tau: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub phi_at_root: f64,
    /// Left ends of every bracketed sign change of the certificate function.
    pub sign_changes: Vec<f64>,
}

/// Certificate function `Φ(τ)`, the (Dominance) expression at `s_max`.
pub fn certificate_phi(tau: f64, engine: &Engine, n: usize) -> Result<f64> {
    let agg = engine.others(n)?;
    Ok(phi_with(tau, &agg, engine.distribution()))
}

fn phi_with(tau: f64, agg: &Aggregate, d: &BeliefDistribution) -> f64 {
    let (lo, hi) = d.support();
    let (s_min, s_max) = two_threshold_points(agg, tau);
    let s_min = s_min.clamp(lo, hi);
    let s_max = s_max.clamp(s_min, hi);
    dominance(d, s_min, s_max)
}

/// Optimal two-threshold mechanism for a log-concave density.
pub fn solve_logconcave(engine: &Engine, n: usize) -> Result<(LogConcaveSolution, MonotoneThresholdMechanism)> {
    let d = engine.distribution();
    let slope_at_half = d.density_deriv(0.5);
    let footnote = (0.0..=2.0 * d.density(0.5)).contains(&slope_at_half);
    if !d.is_log_concave() || !(d.is_symmetric() || footnote) {
        return Err(Error::NotLogConcave);
    }
    let agg = engine.others(n)?;
    let phi = |tau: f64| phi_with(tau, &agg, d);

    const SCAN: usize = 128;
    let taus: Vec<f64> = (0..=SCAN).map(|k| k as f64 / SCAN as f64).collect();
    let values: Vec<f64> = taus.iter().map(|&t| phi(t)).collect();
    let mut brackets = Vec::new();
    for k in 0..SCAN {
        if values[k] == 0.0 {
            brackets.push((taus[k], taus[k]));
        } else if values[k] > 0.0 && values[k + 1] < 0.0 {
            brackets.push((taus[k], taus[k + 1]));
        }
    }
    if values[SCAN] == 0.0 {
        brackets.push((1.0, 1.0));
    }
    let Some(&(mut lo, mut hi)) = brackets.first() else {
        return Err(Error::NoRoot(format!(
            "certificate function has no sign change on [0, 1]: phi(0) = {:.3e}, phi(1) = {:.3e}",
            values[0], values[SCAN]
        )));
    };
    if brackets.len() > 1 {
        log::warn!("certificate function changes sign {} times; using the smallest root", brackets.len());
    }
    for _ in 0..BISECTION_STEPS {
        if hi - lo <= 1e-15 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if phi(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = if phi(lo).abs() <= phi(hi).abs() { lo } else { hi };
    let mech = two_threshold_with(tau, &agg, d, n)?;
    let (s_min, s_max) = mech.thresholds().expect("two-threshold shape");
    let solution = LogConcaveSolution {
        tau,
        s_min,
        s_max,
        phi_at_root: phi(tau),
        sign_changes: brackets.iter().map(|b| b.0).collect(),
    };
    Ok((solution, mech))
}

/// Outcome of checking the (Sign)/(Dominance) conditions.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    pub s_min: f64,
    pub s_max: f64,
    pub sign_integral: f64,
    pub dominance_max: f64,
    pub dominance_at_s_max: f64,
    /// Largest `g` below `s_min`; must be ≤ 0.
    pub g_below_max: f64,
    /// Smallest `g` above `s_max`; must be ≥ 0.
    pub g_above_min: f64,
    pub passed: bool,
    pub failure: Option<String>,
}

const CERT_TOL: f64 = 1e-8;

/// Evaluates the certificate without failing.
pub fn certificate_report(mech: &MonotoneThresholdMechanism, d: &BeliefDistribution) -> Result<CertificateReport> {
    let (s_min, s_max) = mech.thresholds().ok_or_else(|| {
        Error::CertificateFailed("mechanism is not of the two-threshold form".into())
    })?;
    let (lo, hi) = d.support();
    let sign = sign_integral(d, s_min, s_max);
    let mut dom_max = f64::NEG_INFINITY;
    for k in 0..401 {
        let s = s_min + (s_max - s_min) * k as f64 / 400.0;
        dom_max = dom_max.max(dominance(d, s_min, s));
    }
    let dom_end = dominance(d, s_min, s_max);
    let interior = |a: f64, b: f64| -> Vec<f64> {
        (1..200).map(|k| a + (b - a) * k as f64 / 200.0).collect()
    };
    let g_below = if s_min > lo {
        interior(lo, s_min).into_iter().chain([s_min]).map(|s| g_weight(d, s)).fold(f64::NEG_INFINITY, f64::max)
    } else {
        f64::NEG_INFINITY
    };
    let g_above = if s_max < hi {
        [s_max].into_iter().chain(interior(s_max, hi)).map(|s| g_weight(d, s)).fold(f64::INFINITY, f64::min)
    } else {
        f64::INFINITY
    };
    let failure = if sign < -CERT_TOL {
        Some(format!("(Sign) integral {sign:.3e} is negative"))
    } else if dom_max > CERT_TOL {
        Some(format!("(Dominance) reaches {dom_max:.3e} > 0"))
    } else if dom_end.abs() > CERT_TOL {
        Some(format!("(Dominance) at s_max is {dom_end:.3e}, not zero"))
    } else if g_below > CERT_TOL {
        Some(format!("g is positive ({g_below:.3e}) below s_min"))
    } else if g_above < -CERT_TOL {
        Some(format!("g is negative ({g_above:.3e}) above s_max"))
    } else {
        None
    };
    Ok(CertificateReport {
        s_min,
        s_max,
        sign_integral: sign,
        dominance_max: dom_max,
        dominance_at_s_max: dom_end,
        g_below_max: g_below,
        g_above_min: g_above,
        passed: failure.is_none(),
        failure,
    })
}

/// Checks the optimality certificate, failing on the first violated clause.
pub fn verify_certificate(mech: &MonotoneThresholdMechanism, d: &BeliefDistribution) -> Result<CertificateReport> {
    let report = certificate_report(mech, d)?;
    match &report.failure {
        Some(msg) => Err(Error::CertificateFailed(msg.clone())),
        None => Ok(report),
    }
}

/// Allocation probability for type `s_i` facing others' likelihood ratio.
pub fn evaluate(mech: &MonotoneThresholdMechanism, s_i: f64, lr_others: f64) -> Result<f64> {
    let piece = mech.piece_at(s_i).ok_or_else(|| {
        let (lo, hi) = mech.support();
        Error::OutOfSupport { s: s_i, lo, hi }
    })?;
    Ok(match piece.kind {
        PieceKind::Exclude => 0.0,
        PieceKind::Pooled { kappa, tau } => {
            if lr_others >= tau {
                kappa
            } else {
                0.0
            }
        }
        PieceKind::EfficientTail => {
            if s_i >= 1.0 {
                return Ok(if lr_others > 0.0 { 1.0 } else { 0.0 });
            }
            if lr_point(s_i)? * lr_others >= 1.0 {
                1.0
            } else {
                0.0
            }
        }
    })
}

/// Log-space version of [`evaluate`] used by samplers.
pub fn evaluate_log(piece: &ThresholdPiece, s_i: f64, log_lr_others: f64) -> f64 {
    match piece.kind {
        PieceKind::Exclude => 0.0,
        PieceKind::Pooled { kappa, tau } => {
            if tau <= 0.0 || log_lr_others >= tau.ln() {
                kappa
            } else {
                0.0
            }
        }
        PieceKind::EfficientTail => {
            let own = s_i.ln() - (-s_i).ln_1p();
            if own + log_lr_others >= 0.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Probability that one agent receives the good.
pub fn designer_value(mech: &MonotoneThresholdMechanism, engine: &Engine) -> Result<f64> {
    let agg = engine.others(mech.n)?;
    let d = engine.distribution();
    let mut total = 0.0;
    for state in State::BOTH {
        let g = agg.get(state);
        for p in &mech.pieces {
            match p.kind {
                PieceKind::Exclude => {}
                PieceKind::Pooled { kappa, tau } => {
                    total += 0.5 * kappa * d.conditional_mass(state, p.lo, p.hi) * g.tail_prob(tau);
                }
                PieceKind::EfficientTail => {
                    total += 0.5
                        * d.integrate(
                            |s| {
                                let t = if s <= 0.0 { f64::INFINITY } else { (-s).ln_1p() - s.ln() };
                                state.tilt(s) * g.tail_prob_log(t)
                            },
                            p.lo,
                            p.hi,
                            &[],
                        );
                }
            }
        }
    }
    Ok(total)
}

/// Truthful indirect utility on a `k`-point grid over `[0, 1]`, extended
/// outside the support by the boundary types' best deviations.
pub fn mechanism_utility(mech: &MonotoneThresholdMechanism, engine: &Engine, k: usize) -> Result<IndirectUtility> {
    let agg = engine.others(mech.n)?;
    let (lo, hi) = mech.support();
    let low_line = report_line(mech, &agg, lo)?;
    let high_line = report_line(mech, &agg, hi)?;
    let grid = unit_grid(k);
    let values = grid
        .iter()
        .map(|&s| {
            if s < lo {
                Ok((s * low_line.0 - low_line.1).max(0.0))
            } else if s > hi {
                Ok(s * high_line.0 - high_line.1)
            } else {
                let (a, b) = report_line(mech, &agg, s)?;
                Ok(s * a - b)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let u = IndirectUtility { grid, values };
    let bounds = efficient_envelope(engine, mech.n, k)?;
    u.check_feasible(&bounds)?;
    Ok(u)
}

/// Builds a mechanism from an LP solution's region structure.
pub fn from_structure(
    report: &StructureReport,
    engine: &Engine,
    n: usize,
) -> Result<MonotoneThresholdMechanism> {
    let d = engine.distribution();
    let (lo, hi) = d.support();
    let agg = engine.others(n)?;
    let k = report.regions.iter().map(|r| r.end + 1).max().unwrap_or(2);
    let tol = structure_tol(k).max(chord_gap(&agg, k));
    let mut pieces: Vec<ThresholdPiece> = Vec::new();
    let mut push = |a: f64, b: f64, kind: PieceKind| {
        let a = a.max(lo);
        let b = b.min(hi);
        if b <= a {
            return;
        }
        if let Some(last) = pieces.last_mut() {
            if last.kind == kind {
                last.hi = b;
                return;
            }
        }
        pieces.push(ThresholdPiece::new(a, b, kind));
    };
    for r in &report.regions {
        match r.kind {
            RegionKind::AtLower => {
                push(r.s_lo, r.s_hi.min(0.5), PieceKind::Exclude);
                push(r.s_lo.max(0.5), r.s_hi, PieceKind::Pooled { kappa: 1.0, tau: 0.0 });
            }
            RegionKind::AtUpper => push(r.s_lo, r.s_hi, PieceKind::EfficientTail),
            RegionKind::StrictlyBetween if r.end - r.start <= 1 && report.regions.len() > 1 => {}
            RegionKind::StrictlyBetween => {
                let (a, b) = r.line.expect("between segments carry a line");
                let (kappa, tau) = solve_line_with(a, b, &agg, engine.grid_spec().half_range, tol)?;
                let kind = if kappa == 0.0 { PieceKind::Exclude } else { PieceKind::Pooled { kappa, tau } };
                push(r.s_lo, r.s_hi, kind);
            }
        }
    }
    if pieces.is_empty() {
        return Err(Error::StructureViolation("no region intersects the support".into()));
    }
    pieces[0].lo = lo;
    let last = pieces.len() - 1;
    pieces[last].hi = hi;
    for j in 1..pieces.len() {
        pieces[j].lo = pieces[j - 1].hi;
    }
    refine_boundaries(&mut pieces, &agg);
    MonotoneThresholdMechanism::new(pieces, n, d)
}

/// Largest amount by which a chord of `Ū` between neighboring points of a
/// `k`-point grid overshoots `Ū`.
fn chord_gap(agg: &Aggregate, k: usize) -> f64 {
    const SUB: usize = 16;
    let grid = unit_grid(k.max(2));
    let u: Vec<f64> = grid.iter().map(|&s| efficient_utility(agg, s)).collect();
    let mut gap: f64 = 0.0;
    for (g, v) in grid.windows(2).zip(u.windows(2)) {
        for j in 1..SUB {
            let t = j as f64 / SUB as f64;
            let s = g[0] + t * (g[1] - g[0]);
            gap = gap.max(v[0] + t * (v[1] - v[0]) - efficient_utility(agg, s));
        }
    }
    gap
}

/// Moves grid-snapped boundaries to where the neighboring payoff lines meet,
/// or where a line touches `Ū`.
fn refine_boundaries(pieces: &mut [ThresholdPiece], agg: &Aggregate) {
    let line = |p: &ThresholdPiece| match p.kind {
        PieceKind::Exclude => Some((0.0, 0.0)),
        PieceKind::Pooled { kappa, tau } => Some(line_of(agg, kappa, tau)),
        PieceKind::EfficientTail => None,
    };
    for j in 1..pieces.len() {
        let (left, right) = (pieces[j - 1], pieces[j]);
        let cut = match (line(&left), line(&right)) {
            (Some((a1, b1)), Some((a2, b2))) if (a2 - a1).abs() > 1e-12 => Some((b2 - b1) / (a2 - a1)),
            (Some((a, _)), None) => {
                let (mut x, mut y) = (left.lo, right.hi);
                if efficient_slope(agg, x) >= a || efficient_slope(agg, y) < a {
                    None
                } else {
                    for _ in 0..BISECTION_STEPS {
                        let mid = 0.5 * (x + y);
                        if efficient_slope(agg, mid) < a {
                            x = mid;
                        } else {
                            y = mid;
                        }
                        if y - x < 1e-15 {
                            break;
                        }
                    }
                    Some(0.5 * (x + y))
                }
            }
            _ => None,
        };
        if let Some(c) = cut.filter(|&c| c > left.lo && c < right.hi) {
            pieces[j - 1].hi = c;
            pieces[j].lo = c;
        }
    }
}

/// Everything produced by one run of the reduced program.
#[derive(Debug, Clone)]
pub struct OptimalMechanism {
    pub bounds: crate::first_best::EnvelopeBounds,
    pub weights: crate::optimizer::ObjectiveWeights,
    pub solution: crate::optimizer::ReducedSolution,
    pub structure: StructureReport,
    pub mechanism: MonotoneThresholdMechanism,
}

/// Solves the reduced program on a `k`-point grid and reads off the
/// monotone threshold mechanism implementing its solution.
pub fn optimal_mechanism(engine: &Engine, n: usize, k: usize) -> Result<OptimalMechanism> {
    let bounds = efficient_envelope(engine, n, k)?;
    let weights = crate::optimizer::objective_weights(engine.distribution(), k);
    let solution = crate::optimizer::solve_reduced(&weights, &bounds)?;
    let structure = check_extreme_structure(&solution.utility, &bounds, structure_tol(k))?;
    let mechanism = from_structure(&structure, engine, n)?;
    Ok(OptimalMechanism { bounds, weights, solution, structure, mechanism })
}

/// Finite-market mechanism derived from the large-market optimum: the
/// limit's middle line, shifted down just enough to fit under `Ū^n`.
pub fn asymptotic_family(
    engine: &Engine,
    n: usize,
    u_limit: &IndirectUtility,
) -> Result<MonotoneThresholdMechanism> {
    let d = engine.distribution();
    let (lo, hi) = d.support();
    let k = u_limit.grid.len();
    let bounds = crate::first_best::asymptotic_envelope(k);
    let report = check_extreme_structure(u_limit, &bounds, structure_tol(k))?;
    let line = report
        .regions
        .iter()
        .filter(|r| r.kind == RegionKind::StrictlyBetween)
        .filter_map(|r| r.line)
        .max_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(std::cmp::Ordering::Equal));
    let floor = || {
        let mut pieces = Vec::new();
        if lo < 0.5 {
            pieces.push(ThresholdPiece::new(lo, 0.5_f64.min(hi), PieceKind::Exclude));
        }
        if hi > 0.5 {
            pieces.push(ThresholdPiece::new(lo.max(0.5), hi, PieceKind::Pooled { kappa: 1.0, tau: 0.0 }));
        }
        MonotoneThresholdMechanism::new(pieces, n, d)
    };
    let Some((a, b)) = line else {
        return floor();
    };
    let agg = engine.others(n)?;

    // Tangency point of slope a on Ū^n, where the gap a·s − Ū^n(s) peaks.
    let (mut s_lo, mut s_hi) = (0.0, 1.0);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (s_lo + s_hi);
        if efficient_slope(&agg, mid) < a {
            s_lo = mid;
        } else {
            s_hi = mid;
        }
        if s_hi - s_lo < 1e-15 {
            break;
        }
    }
    let s_star = 0.5 * (s_lo + s_hi);
    let b_n = b.max(a * s_star - efficient_utility(&agg, s_star));
    if a <= 0.0 || a >= 2.0 {
        return floor();
    }
    let s_min = (b_n / a).clamp(lo, hi);
    let s_max = ((1.0 - b_n) / (2.0 - a)).clamp(s_min, hi);
    let (kappa, tau) = solve_line_with(a, b_n, &agg, engine.grid_spec().half_range, LINE_TOL)?;
    let pieces: Vec<ThresholdPiece> = [
        ThresholdPiece::new(lo, s_min, PieceKind::Exclude),
        ThresholdPiece::new(s_min, s_max, PieceKind::Pooled { kappa, tau }),
        ThresholdPiece::new(s_max, hi, PieceKind::Pooled { kappa: 1.0, tau: 0.0 }),
    ]
    .into_iter()
    .filter(|p| p.hi > p.lo)
    .collect();
    MonotoneThresholdMechanism::new(pieces, n, d)
}

/// Experiment offered to one receiver-type interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Experiment {
    /// Never recommend.
    Null,
    /// Recommend with `probability` iff the sender's belief is at least `sender_belief`.
    Cutoff { sender_belief: f64, probability: f64 },
    /// Recommend iff sender belief plus receiver belief is at least one.
    Matching,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MenuEntry {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PersuasionMenu {
    pub entries: Vec<MenuEntry>,
    pub deterministic: bool,
    pub monotone_partitional: bool,
}

/// Reads a two-agent mechanism as a menu of experiments indexed by the
/// receiver's belief `λ`.
pub fn export_persuasion_menu(mech: &MonotoneThresholdMechanism) -> Result<PersuasionMenu> {
    if mech.n != 2 {
        return Err(Error::WrongMarketSize(mech.n));
    }
    let mut entries: Vec<MenuEntry> = Vec::new();
    for p in &mech.pieces {
        let experiment = match p.kind {
            PieceKind::Exclude | PieceKind::Pooled { kappa: 0.0, .. } => Experiment::Null,
            PieceKind::Pooled { kappa, tau } => Experiment::Cutoff {
                sender_belief: if tau.is_infinite() { 1.0 } else { tau / (1.0 + tau) },
                probability: kappa,
            },
            PieceKind::EfficientTail => Experiment::Matching,
        };
        if let Some(last) = entries.last_mut() {
            if last.experiment == experiment {
                last.lambda_hi = p.hi;
                continue;
            }
        }
        entries.push(MenuEntry { lambda_lo: p.lo, lambda_hi: p.hi, experiment });
    }
    let deterministic = entries.iter().all(|e| match e.experiment {
        Experiment::Cutoff { probability, .. } => probability == 0.0 || probability == 1.0,
        _ => true,
    });
    // Recommendation sets {s : recommend} must shrink-wrap monotonically:
    // the cutoff belief may never rise as λ rises.
    let cutoff = |e: &MenuEntry, lambda: f64| match e.experiment {
        Experiment::Null => 1.0 + 1e-9,
        Experiment::Cutoff { sender_belief, .. } => sender_belief,
        Experiment::Matching => 1.0 - lambda,
    };
    let mut prev = f64::INFINITY;
    let mut monotone = true;
    for e in &entries {
        for lambda in [e.lambda_lo, e.lambda_hi] {
            let c = cutoff(e, lambda);
            if c > prev + 1e-12 {
                monotone = false;
            }
            prev = c;
        }
    }
    Ok(PersuasionMenu { entries, deterministic, monotone_partitional: monotone && deterministic })
}
