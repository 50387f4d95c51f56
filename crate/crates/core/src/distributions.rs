//! Private-belief distributions.
//!
//! A private belief is the posterior `s = P(ω = +1 | signal)` under a fair
//! prior. Every distribution here describes the *unconditional* density `f`
//! of that belief; the state-conditional densities follow from the belief
//! normalization as `f₊(s) = 2s·f(s)` and `f₋(s) = 2(1 − s)·f(s)`.

use std::path::Path;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quadrature;

/// Hard-fail tolerance for normalization and Bayes plausibility.
pub const VALIDATION_TOL: f64 = 1e-6;
/// Number of interior points used for shape checks.
const SHAPE_GRID: usize = 1001;
/// Number of points in the conditional CDF tables used for sampling.
const SAMPLER_GRID: usize = 4097;

/// The state of the world, `ω ∈ {−1, +1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum State {
    #[serde(rename = "+1")]
    Plus,
    #[serde(rename = "-1")]
    Minus,
}

impl State {
    pub const BOTH: [State; 2] = [State::Plus, State::Minus];

    /// Payoff of receiving the good in this state.
    pub fn payoff(self) -> f64 {
        match self {
            State::Plus => 1.0,
            State::Minus => -1.0,
        }
    }

    /// Density ratio `f_ω(s) / f(s)`.
    #[inline]
    pub fn tilt(self, s: f64) -> f64 {
        match self {
            State::Plus => 2.0 * s,
            State::Minus => 2.0 * (1.0 - s),
        }
    }
}

/// Likelihood ratio of a single belief, `s / (1 − s)`.
pub fn lr_point(s: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::OutOfSupport { s, lo: 0.0, hi: 1.0 });
    }
    if s == 1.0 {
        return Err(Error::Singular);
    }
    Ok(s / (1.0 - s))
}

/// Log-likelihood ratio `ln(s / (1 − s))`, saturating to ±∞ at the ends.
#[inline]
pub fn log_lr(s: f64) -> f64 {
    s.ln() - (-s).ln_1p()
}

/// Logistic map from log-likelihood ratio back to belief.
#[inline]
pub fn sigmoid(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(y)` without cancellation.
#[inline]
pub fn log_sigmoid(y: f64) -> f64 {
    if y >= 0.0 {
        -(-y).exp().ln_1p()
    } else {
        y - y.exp().ln_1p()
    }
}

/// Serializable description of a belief distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DistributionSpec {
    Uniform,
    BetaSymmetric {
        alpha: f64,
    },
    TruncatedNormal {
        sigma: f64,
    },
    /// Piecewise-linear density through `(s, f(s))` points on a uniform grid,
    /// either inline or read from a two-column CSV file.
    Tabulated {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        points: Option<Vec<(f64, f64)>>,
    },
}

impl DistributionSpec {
    /// Builds the distribution; relative CSV paths resolve against `base`.
    pub fn build(&self, base: Option<&Path>) -> Result<BeliefDistribution> {
        match self {
            DistributionSpec::Uniform => Ok(BeliefDistribution::uniform()),
            DistributionSpec::BetaSymmetric { alpha } => BeliefDistribution::beta_symmetric(*alpha),
            DistributionSpec::TruncatedNormal { sigma } => {
                BeliefDistribution::truncated_normal(*sigma)
            }
            DistributionSpec::Tabulated { path, points } => match (path, points) {
                (_, Some(points)) => BeliefDistribution::tabulated(points),
                (Some(path), None) => {
                    let p = Path::new(path);
                    let resolved = match base {
                        Some(b) if p.is_relative() => b.join(p),
                        _ => p.to_path_buf(),
                    };
                    let points = read_density_csv(&resolved)?;
                    let mut d = BeliefDistribution::tabulated(&points)?;
                    d.spec = self.clone();
                    Ok(d)
                }
                (None, None) => Err(Error::Config(
                    "tabulated distribution needs `path` or `points`".into(),
                )),
            },
        }
    }
}

/// Reads a two-column `(s, f(s))` CSV; a non-numeric first row is a header.
pub fn read_density_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::InvalidDistribution(format!("{}: {e}", path.display())))?;
    let mut points = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() < 2 {
            return Err(Error::InvalidDistribution(format!(
                "row {} has {} columns, expected 2",
                row + 1,
                record.len()
            )));
        }
        match (record[0].parse::<f64>(), record[1].parse::<f64>()) {
            (Ok(s), Ok(f)) => points.push((s, f)),
            _ if row == 0 => continue,
            _ => {
                return Err(Error::InvalidDistribution(format!(
                    "row {} is not numeric",
                    row + 1
                )))
            }
        }
    }
    Ok(points)
}

#[derive(Debug, Clone)]
enum Density {
    Uniform,
    Beta { alpha: f64, log_norm: f64 },
    Normal { sigma: f64, norm: f64 },
    Table { lo: f64, step: f64, values: Vec<f64> },
}

/// Unconditional density of the private belief on `[support_lo, support_hi]`.
#[derive(Debug, Clone)]
pub struct BeliefDistribution {
    spec: DistributionSpec,
    density: Density,
    support_lo: f64,
    support_hi: f64,
    log_concave: bool,
    symmetric_about_half: bool,
    sampler: OnceLock<Sampler>,
}

impl BeliefDistribution {
    pub fn uniform() -> Self {
        Self::from_parts(DistributionSpec::Uniform, Density::Uniform, 0.0, 1.0, true, true)
    }

    /// `f(s) ∝ s^(α−1) (1 − s)^(α−1)`; log-concave for `α ≥ 1`.
    pub fn beta_symmetric(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidDistribution(format!("beta alpha must be > 0, got {alpha}")));
        }
        let log_norm = 2.0 * ln_gamma(alpha) - ln_gamma(2.0 * alpha);
        Ok(Self::from_parts(
            DistributionSpec::BetaSymmetric { alpha },
            Density::Beta { alpha, log_norm },
            0.0,
            1.0,
            alpha >= 1.0,
            true,
        ))
    }

    /// Normal with mean 1/2 and scale `sigma`, truncated to (0, 1).
    pub fn truncated_normal(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidDistribution(format!("sigma must be > 0, got {sigma}")));
        }
        let mass = erf(0.5 / (sigma * std::f64::consts::SQRT_2));
        let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt() * mass);
        Ok(Self::from_parts(
            DistributionSpec::TruncatedNormal { sigma },
            Density::Normal { sigma, norm },
            0.0,
            1.0,
            true,
            true,
        ))
    }

    /// Piecewise-linear density through `points`, which must lie on a uniform
    /// grid. Shape flags are detected from the data.
    pub fn tabulated(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidDistribution("need at least two tabulated points".into()));
        }
        let lo = points[0].0;
        let hi = points[points.len() - 1].0;
        if !(0.0..1.0).contains(&lo) || !(hi > lo && hi <= 1.0) {
            return Err(Error::InvalidDistribution(format!(
                "support [{lo}, {hi}] must satisfy 0 <= lo < hi <= 1"
            )));
        }
        let step = (hi - lo) / (points.len() - 1) as f64;
        for (k, &(s, f)) in points.iter().enumerate() {
            let expected = lo + step * k as f64;
            if (s - expected).abs() > 1e-9 {
                return Err(Error::InvalidDistribution(format!(
                    "tabulated grid is not uniform at row {}: s = {s}, expected {expected}",
                    k + 1
                )));
            }
            if !(f.is_finite() && f >= 0.0) {
                return Err(Error::InvalidDistribution(format!(
                    "density must be finite and nonnegative, got f({s}) = {f}"
                )));
            }
        }
        let values: Vec<f64> = points.iter().map(|p| p.1).collect();
        let mut d = Self::from_parts(
            DistributionSpec::Tabulated { path: None, points: Some(points.to_vec()) },
            Density::Table { lo, step, values },
            lo,
            hi,
            false,
            false,
        );
        d.log_concave = d.max_log_second_difference() <= 1e-9;
        d.symmetric_about_half = d.max_asymmetry() <= 1e-9;
        Ok(d)
    }

    fn from_parts(
        spec: DistributionSpec,
        density: Density,
        support_lo: f64,
        support_hi: f64,
        log_concave: bool,
        symmetric_about_half: bool,
    ) -> Self {
        Self {
            spec,
            density,
            support_lo,
            support_hi,
            log_concave,
            symmetric_about_half,
            sampler: OnceLock::new(),
        }
    }

    pub fn spec(&self) -> &DistributionSpec {
        &self.spec
    }

    pub fn support(&self) -> (f64, f64) {
        (self.support_lo, self.support_hi)
    }

    /// Whether the support is the full open unit interval.
    pub fn has_full_support(&self) -> bool {
        self.support_lo == 0.0 && self.support_hi == 1.0
    }

    pub fn is_log_concave(&self) -> bool {
        self.log_concave
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric_about_half
    }

    pub fn in_support(&self, s: f64) -> bool {
        s >= self.support_lo && s <= self.support_hi
    }

    /// Interior kinks of the density (tabulated knots), plus a geometric
    /// mesh toward the endpoints where a beta density is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.density {
            Density::Table { lo, step, values } => {
                (1..values.len() - 1).map(|k| lo + step * k as f64).collect()
            }
            Density::Beta { alpha, .. } if alpha.fract() != 0.0 => (1..=10)
                .map(|k| 0.1f64.powi(k))
                .flat_map(|h| [h, 1.0 - h])
                .collect(),
            _ => Vec::new(),
        }
    }

    /// `f(s)`, zero outside the support. Endpoint values are one-sided limits.
    pub fn density(&self, s: f64) -> f64 {
        if !self.in_support(s) {
            return 0.0;
        }
        match &self.density {
            Density::Uniform => 1.0,
            Density::Beta { alpha, log_norm } => {
                if s <= 0.0 || s >= 1.0 {
                    return match alpha.partial_cmp(&1.0) {
                        Some(std::cmp::Ordering::Greater) => 0.0,
                        Some(std::cmp::Ordering::Equal) => 1.0,
                        _ => f64::INFINITY,
                    };
                }
                ((alpha - 1.0) * (s.ln() + (-s).ln_1p()) - log_norm).exp()
            }
            Density::Normal { sigma, norm } => {
                let z = (s - 0.5) / sigma;
                norm * (-0.5 * z * z).exp()
            }
            Density::Table { lo, step, values } => {
                let u = (s - lo) / step;
                let k = (u.floor() as usize).min(values.len() - 2);
                let t = u - k as f64;
                values[k] * (1.0 - t) + values[k + 1] * t
            }
        }
    }

    /// `f(σ(y))` for a log-likelihood ratio `y`, keeping precision in the
    /// far tails where `σ(y)` rounds to 0 or 1.
    pub fn density_logit(&self, y: f64) -> f64 {
        match &self.density {
            Density::Beta { alpha, log_norm } if y.is_finite() => {
                ((alpha - 1.0) * (log_sigmoid(y) + log_sigmoid(-y)) - log_norm).exp()
            }
            _ => self.density(sigmoid(y)),
        }
    }

    /// `f′(s)`; piecewise slope for tabulated densities.
    pub fn density_deriv(&self, s: f64) -> f64 {
        if !self.in_support(s) {
            return 0.0;
        }
        match &self.density {
            Density::Uniform => 0.0,
            Density::Beta { alpha, .. } => {
                if s <= 0.0 || s >= 1.0 {
                    return 0.0;
                }
                self.density(s) * (alpha - 1.0) * (1.0 / s - 1.0 / (1.0 - s))
            }
            Density::Normal { sigma, .. } => -self.density(s) * (s - 0.5) / (sigma * sigma),
            Density::Table { lo, step, values } => {
                let u = (s - lo) / step;
                let k = (u.floor() as usize).min(values.len() - 2);
                (values[k + 1] - values[k]) / step
            }
        }
    }

    /// State-conditional density `f_ω(s)`.
    pub fn conditional_pdf(&self, s: f64, state: State) -> Result<f64> {
        if !self.in_support(s) {
            return Err(Error::OutOfSupport { s, lo: self.support_lo, hi: self.support_hi });
        }
        Ok(state.tilt(s) * self.density(s))
    }

    /// `P[s ∈ [a, b] | ω]`.
    pub fn conditional_mass(&self, state: State, a: f64, b: f64) -> f64 {
        let lo = a.max(self.support_lo);
        let hi = b.min(self.support_hi);
        if hi <= lo {
            return 0.0;
        }
        let panels = if hi - lo > 0.05 { 8 } else { 1 };
        quadrature::composite(
            |s| state.tilt(s) * self.density(s),
            lo,
            hi,
            &self.breakpoints(),
            panels,
        )
    }

    /// `∫ φ(s) f(s) ds` over `[a, b] ∩ support`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut phi: F, a: f64, b: f64, extra: &[f64]) -> f64 {
        let lo = a.max(self.support_lo);
        let hi = b.min(self.support_hi);
        let mut cuts = self.breakpoints();
        cuts.extend_from_slice(extra);
        quadrature::composite(|s| phi(s) * self.density(s), lo, hi, &cuts, 64)
    }

    fn shape_grid(&self) -> impl Iterator<Item = f64> + '_ {
        let (lo, hi) = self.support();
        (0..SHAPE_GRID).map(move |k| lo + (hi - lo) * (k + 1) as f64 / (SHAPE_GRID + 1) as f64)
    }

    fn max_log_second_difference(&self) -> f64 {
        let logs: Vec<f64> = self.shape_grid().map(|s| self.density(s).ln()).collect();
        logs.windows(3)
            .map(|w| {
                let d = w[0] - 2.0 * w[1] + w[2];
                if d.is_nan() {
                    f64::INFINITY
                } else {
                    d
                }
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn max_asymmetry(&self) -> f64 {
        self.shape_grid()
            .map(|s| (self.density(s) - self.density(1.0 - s)).abs())
            .fold(0.0, f64::max)
    }

    /// Lazily built inverse-CDF tables for both states.
    pub fn sampler(&self) -> &Sampler {
        self.sampler.get_or_init(|| Sampler::new(self))
    }
}

/// Outcome of [`validate`].
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub normalization_error: f64,
    pub mean: f64,
    pub mean_error: f64,
    pub positive_on_interior: bool,
    pub log_concave: bool,
    pub symmetric: bool,
    pub log_derivative_bound: f64,
    pub max_log_second_difference: f64,
}

/// Checks normalization, Bayes plausibility and the declared shape flags.
pub fn validate(d: &BeliefDistribution) -> Result<ValidationReport> {
    let (lo, hi) = d.support();
    let mass = d.integrate(|_| 1.0, lo, hi, &[0.5]);
    let mean = d.integrate(|s| s, lo, hi, &[0.5]);
    let positive = d.shape_grid().all(|s| d.density(s) > 0.0);
    let bound = d
        .shape_grid()
        .map(|s| (d.density_deriv(s) / d.density(s)).abs())
        .fold(0.0, f64::max);
    let second = d.max_log_second_difference();
    let report = ValidationReport {
        normalization_error: (mass - 1.0).abs(),
        mean,
        mean_error: (mean - 0.5).abs(),
        positive_on_interior: positive,
        log_concave: second <= 1e-9,
        symmetric: d.max_asymmetry() <= 1e-9,
        log_derivative_bound: bound,
        max_log_second_difference: second,
    };
    if report.normalization_error > VALIDATION_TOL {
        return Err(Error::InvalidDistribution(format!(
            "density integrates to {mass}, error {:.3e}",
            report.normalization_error
        )));
    }
    if report.mean_error > VALIDATION_TOL {
        return Err(Error::InvalidDistribution(format!(
            "mean belief is {mean}, Bayes plausibility requires 1/2"
        )));
    }
    if !positive {
        return Err(Error::InvalidDistribution("density vanishes inside the support".into()));
    }
    if d.is_log_concave() && !report.log_concave {
        return Err(Error::InvalidDistribution("declared log-concave but is not".into()));
    }
    if d.is_symmetric() && !report.symmetric {
        return Err(Error::InvalidDistribution("declared symmetric but is not".into()));
    }
    Ok(report)
}

/// Inverse-CDF tables of both conditional distributions.
#[derive(Debug, Clone)]
pub struct Sampler {
    grid: Vec<f64>,
    cdf_plus: Vec<f64>,
    cdf_minus: Vec<f64>,
}

impl Sampler {
    fn new(d: &BeliefDistribution) -> Self {
        let (lo, hi) = d.support();
        let grid: Vec<f64> = (0..SAMPLER_GRID)
            .map(|k| lo + (hi - lo) * k as f64 / (SAMPLER_GRID - 1) as f64)
            .collect();
        let table = |state: State| {
            let mut cdf = Vec::with_capacity(grid.len());
            let mut acc = 0.0;
            cdf.push(0.0);
            for w in grid.windows(2) {
                acc += d.conditional_mass(state, w[0], w[1]);
                cdf.push(acc);
            }
            let total = acc;
            cdf.iter_mut().for_each(|c| *c /= total);
            cdf
        };
        let cdf_plus = table(State::Plus);
        let cdf_minus = table(State::Minus);
        Self { grid, cdf_plus, cdf_minus }
    }

    /// Conditional CDF `F_ω(s)` by linear interpolation of the table.
    pub fn cdf(&self, state: State, s: f64) -> f64 {
        let cdf = self.table(state);
        let (lo, hi) = (self.grid[0], self.grid[self.grid.len() - 1]);
        if s <= lo {
            return 0.0;
        }
        if s >= hi {
            return 1.0;
        }
        let u = (s - lo) / (hi - lo) * (self.grid.len() - 1) as f64;
        let k = (u.floor() as usize).min(self.grid.len() - 2);
        let t = u - k as f64;
        cdf[k] * (1.0 - t) + cdf[k + 1] * t
    }

    fn table(&self, state: State) -> &[f64] {
        match state {
            State::Plus => &self.cdf_plus,
            State::Minus => &self.cdf_minus,
        }
    }

    /// Inverse CDF at `u ∈ [0, 1]`.
    pub fn quantile(&self, state: State, u: f64) -> f64 {
        let cdf = self.table(state);
        let k = cdf.partition_point(|&c| c <= u).clamp(1, cdf.len() - 1);
        let (c0, c1) = (cdf[k - 1], cdf[k]);
        let t = if c1 > c0 { ((u - c0) / (c1 - c0)).clamp(0.0, 1.0) } else { 0.0 };
        self.grid[k - 1] + t * (self.grid[k] - self.grid[k - 1])
    }
}

/// One draw of the belief conditional on `state`.
pub fn sample<R: Rng + ?Sized>(d: &BeliefDistribution, state: State, rng: &mut R) -> f64 {
    d.sampler().quantile(state, rng.gen::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn families() -> Vec<BeliefDistribution> {
        vec![
            BeliefDistribution::uniform(),
            BeliefDistribution::beta_symmetric(2.0).unwrap(),
            BeliefDistribution::beta_symmetric(3.5).unwrap(),
            BeliefDistribution::truncated_normal(0.2).unwrap(),
        ]
    }

    #[test]
    fn conditional_pdf_examples() {
        let u = BeliefDistribution::uniform();
        assert_eq!(u.conditional_pdf(0.5, State::Plus).unwrap(), 1.0);
        assert_eq!(u.conditional_pdf(0.25, State::Minus).unwrap(), 1.5);
        let b = BeliefDistribution::beta_symmetric(2.0).unwrap();
        assert_abs_diff_eq!(b.density(0.5), 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(b.conditional_pdf(0.5, State::Plus).unwrap(), 1.5, epsilon = 1e-12);
    }

    #[test]
    fn conditional_pdf_rejects_out_of_support() {
        let d = BeliefDistribution::tabulated(&[(0.2, 1.0 / 0.6), (0.5, 1.0 / 0.6), (0.8, 1.0 / 0.6)])
            .unwrap();
        assert!(matches!(d.conditional_pdf(0.1, State::Plus), Err(Error::OutOfSupport { .. })));
    }

    #[test]
    fn lr_point_examples() {
        assert_eq!(lr_point(0.5).unwrap(), 1.0);
        assert_eq!(lr_point(0.75).unwrap(), 3.0);
        assert_abs_diff_eq!(lr_point(0.25).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(lr_point(1.0), Err(Error::Singular));
    }

    #[test]
    fn conditionals_integrate_to_one_and_sum_to_twice_f() {
        for d in families() {
            for state in State::BOTH {
                assert_abs_diff_eq!(d.conditional_mass(state, 0.0, 1.0), 1.0, epsilon = 1e-8);
            }
            for k in 1..100 {
                let s = k as f64 / 100.0;
                let sum = d.conditional_pdf(s, State::Plus).unwrap()
                    + d.conditional_pdf(s, State::Minus).unwrap();
                assert_abs_diff_eq!(sum, 2.0 * d.density(s), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn validate_builtin_families() {
        let r = validate(&BeliefDistribution::uniform()).unwrap();
        assert!(r.log_concave && r.symmetric);
        assert_abs_diff_eq!(r.mean, 0.5, epsilon = 1e-12);
        let r = validate(&BeliefDistribution::beta_symmetric(2.0).unwrap()).unwrap();
        assert!(r.log_concave);
        assert!(r.normalization_error < 1e-8 && r.mean_error < 1e-8);
        let r = validate(&BeliefDistribution::truncated_normal(0.2).unwrap()).unwrap();
        assert!(r.log_concave && r.symmetric);
        assert!(r.log_derivative_bound.is_finite());
    }

    #[test]
    fn validate_rejects_biased_table() {
        // Linear density 0.6 + 0.8 s has mass 1 and mean 0.3 + 0.8/3 ≈ 0.567.
        let points: Vec<(f64, f64)> =
            (0..=10).map(|k| (k as f64 / 10.0, 0.6 + 0.8 * k as f64 / 10.0)).collect();
        assert!(matches!(
            validate(&BeliefDistribution::tabulated(&points).unwrap()),
            Err(Error::InvalidDistribution(_))
        ));
        // Mean exactly 0.55: f = 0.7 + 0.6 s.
        let points: Vec<(f64, f64)> =
            (0..=10).map(|k| (k as f64 / 10.0, 0.7 + 0.6 * k as f64 / 10.0)).collect();
        assert!(validate(&BeliefDistribution::tabulated(&points).unwrap()).is_err());
    }

    #[test]
    fn tabulated_flags_are_detected() {
        // Tent density 4·min(s, 1 − s), sampled on a grid that has 1/2 as a knot.
        let points: Vec<(f64, f64)> = (0..=20)
            .map(|k| {
                let s = k as f64 / 20.0;
                (s, 4.0 * s.min(1.0 - s))
            })
            .collect();
        let d = BeliefDistribution::tabulated(&points).unwrap();
        assert!(d.is_log_concave() && d.is_symmetric());
        validate(&d).unwrap();
        let skew: Vec<(f64, f64)> =
            (0..=10).map(|k| (k as f64 / 10.0, if k == 5 { 0.2 } else { 1.0 })).collect();
        assert!(!BeliefDistribution::tabulated(&skew).unwrap().is_log_concave());
    }

    #[test]
    fn spec_roundtrip_through_json() {
        let spec: DistributionSpec =
            serde_json::from_str(r#"{"family":"beta_symmetric","alpha":2.0}"#).unwrap();
        assert_eq!(spec, DistributionSpec::BetaSymmetric { alpha: 2.0 });
        let d = spec.build(None).unwrap();
        assert_eq!(d.spec(), &spec);
    }

    #[test]
    fn sampling_moments() {
        let d = BeliefDistribution::uniform();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 1_000_000;
        for (state, target) in [(State::Plus, 2.0 / 3.0), (State::Minus, 1.0 / 3.0)] {
            let xs: Vec<f64> = (0..draws).map(|_| sample(&d, state, &mut rng)).collect();
            let mean = xs.iter().sum::<f64>() / draws as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
            let se = (var / draws as f64).sqrt();
            assert!((mean - target).abs() < 3.0 * se, "{state:?}: {mean} vs {target}");
        }
    }

    #[test]
    fn sampling_matches_quadrature_cdf() {
        let d = BeliefDistribution::beta_symmetric(2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 1_000_000;
        let mut xs: Vec<f64> = (0..draws).map(|_| sample(&d, State::Plus, &mut rng)).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Exact CDF of 2s·6s(1−s): 4s³ − 3s⁴.
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = 4.0 * x.powi(3) - 3.0 * x.powi(4);
                (f - i as f64 / draws as f64).abs().max((f - (i + 1) as f64 / draws as f64).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks <= 0.002, "KS distance {ks}");
    }

    #[test]
    fn mixture_sampling_is_bayes_plausible() {
        let d = BeliefDistribution::truncated_normal(0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 1_000_000;
        let xs: Vec<f64> = (0..draws)
            .map(|_| {
                let state = if rng.gen::<bool>() { State::Plus } else { State::Minus };
                sample(&d, state, &mut rng)
            })
            .collect();
        let mean = xs.iter().sum::<f64>() / draws as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        assert!((mean - 0.5).abs() < 3.0 * (var / draws as f64).sqrt());
    }
}
