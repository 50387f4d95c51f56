//! Distributions of aggregate log-likelihood ratios.
//!
//! For `m` conditionally independent beliefs the product `Π LR(s_k)` is the
//! likelihood ratio of the whole profile. Tilting the unconditional law by
//! `Π 2s_k` (or `Π 2(1 − s_k)`) gives the law of the profile conditional on
//! the state, so every integral of the form
//! `2^m ∫ Π s_k · 1{LR ≥ τ} dF^⊗` equals a tail probability of the sum of
//! `m` i.i.d. log-likelihood ratios under `ω = +1`, and likewise for `ω = −1`.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::distributions::{sigmoid, BeliefDistribution, State};
use crate::error::{Error, Result};
use crate::quadrature;

/// Largest mass a single-signal grid may push into its tail atoms.
pub const MAX_CLIPPED: f64 = 1e-4;

/// Resolution of the log-likelihood-ratio grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Number of grid points; a power of two plus one.
    pub points: usize,
    /// Half-width `L` of the grid in log-LR units.
    pub half_range: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { points: 8193, half_range: 40.0 }
    }
}

impl GridSpec {
    pub fn check(&self) -> Result<()> {
        let n = self.points;
        if n < 3 || !(n - 1).is_power_of_two() {
            return Err(Error::Config(format!("grid size {n} is not a power of two plus one")));
        }
        if !(self.half_range.is_finite() && self.half_range > 0.0) {
            return Err(Error::Config(format!("log range {} must be positive", self.half_range)));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half_range / (self.points - 1) as f64
    }
}

/// Law of `Σ log LR(s_k)` over `m` signals given a state, as cell masses on a
/// uniform grid plus two atoms for the clipped tails.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDistribution {
    pub spec: GridSpec,
    pub mass: Vec<f64>,
    pub atom_pos: f64,
    pub atom_neg: f64,
    pub state: State,
    pub m: usize,
    suffix: Vec<f64>,
}

impl GridDistribution {
    fn new(spec: GridSpec, mass: Vec<f64>, atom_pos: f64, atom_neg: f64, state: State, m: usize) -> Self {
        let mut suffix = vec![0.0; mass.len() + 1];
        for k in (0..mass.len()).rev() {
            suffix[k] = suffix[k + 1] + mass[k];
        }
        Self { spec, mass, atom_pos, atom_neg, state, m, suffix }
    }

    /// Unit mass at zero: the empty profile has likelihood ratio one.
    pub fn unit(spec: GridSpec, state: State) -> Self {
        let mut mass = vec![0.0; spec.points];
        mass[spec.points / 2] = 1.0;
        Self::new(spec, mass, 0.0, 0.0, state, 0)
    }

    /// Grid point `x_k`.
    pub fn point(&self, k: usize) -> f64 {
        -self.spec.half_range + self.spec.step() * k as f64
    }

    pub fn total_mass(&self) -> f64 {
        self.suffix[0] + self.atom_pos + self.atom_neg
    }

    pub fn interior_mass(&self) -> f64 {
        self.suffix[0]
    }

    /// `P[LR ≥ τ | ω]`; `τ = 0` is the sure event.
    pub fn tail_prob(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            return 1.0;
        }
        if tau == f64::INFINITY {
            return self.atom_pos;
        }
        self.tail_prob_log(tau.ln())
    }

    /// `P[Σ log LR ≥ t | ω]`, continuous and nonincreasing in `t`.
    pub fn tail_prob_log(&self, t: f64) -> f64 {
        if self.m == 0 {
            return if t <= 0.0 { 1.0 } else { 0.0 };
        }
        if t.is_nan() {
            return f64::NAN;
        }
        let h = self.spec.step();
        let start = -self.spec.half_range - 0.5 * h;
        let u = (t - start) / h;
        if u <= 0.0 {
            return 1.0 - self.atom_neg;
        }
        let n = self.mass.len();
        if u >= n as f64 {
            return self.atom_pos;
        }
        let k = (u.floor() as usize).min(n - 1);
        let theta = u - k as f64;
        (self.atom_pos + self.suffix[k + 1] + self.partial_above(k, theta)).clamp(0.0, 1.0)
    }

    /// Mass of cell `k` above fraction `theta`, from a quadratic density
    /// reconstruction that preserves the cell mass and is continuous across
    /// neighbouring cells.
    fn partial_above(&self, k: usize, theta: f64) -> f64 {
        let mk = self.mass[k];
        if mk <= 0.0 {
            return 0.0;
        }
        let prev = if k > 0 { self.mass[k - 1] } else { 0.0 };
        let next = self.mass.get(k + 1).copied().unwrap_or(0.0);
        let rl = 0.5 * (prev + mk);
        let rr = 0.5 * (mk + next);
        let c = 6.0 * (mk - 0.5 * (rl + rr));
        let negative = if c < 0.0 {
            let v = 0.5 * ((rr - rl) / c + 1.0);
            (0.0..1.0).contains(&v) && rl + (rr - rl) * v + c * v * (1.0 - v) < 0.0
        } else {
            false
        };
        let above = if negative {
            mk * (1.0 - theta)
        } else {
            let t2 = theta * theta;
            rl * (1.0 - theta)
                + 0.5 * (rr - rl) * (1.0 - t2)
                + c * (0.5 * (1.0 - t2) - (1.0 - t2 * theta) / 3.0)
        };
        above.clamp(0.0, mk)
    }

    /// Median of the interior-plus-atoms law, to one cell.
    pub fn median(&self) -> f64 {
        let target = 0.5;
        let mut acc = self.atom_neg;
        for (k, &w) in self.mass.iter().enumerate() {
            acc += w;
            if acc >= target {
                return self.point(k);
            }
        }
        f64::INFINITY
    }
}

/// Law of `log LR(s)` for one belief drawn from `F_ω`.
pub fn single_log_lr(d: &BeliefDistribution, state: State, spec: GridSpec) -> Result<GridDistribution> {
    spec.check()?;
    let h = spec.step();
    let big_l = spec.half_range;
    let (lo, hi) = d.support();
    let y_lo = if lo > 0.0 { lo.ln() - (-lo).ln_1p() } else { f64::NEG_INFINITY };
    let y_hi = if hi < 1.0 { hi.ln() - (-hi).ln_1p() } else { f64::INFINITY };
    let knots: Vec<f64> = d.breakpoints().iter().map(|&s| s.ln() - (-s).ln_1p()).collect();

    // Density of y = log LR(s) under ω: f_ω(s) · ds/dy with ds/dy = s(1 − s).
    let rho = |y: f64| {
        let s = sigmoid(y);
        let c = sigmoid(-y);
        let tilt = match state {
            State::Plus => 2.0 * s,
            State::Minus => 2.0 * c,
        };
        tilt * d.density_logit(y) * s * c
    };
    let integrate = |a: f64, b: f64| -> f64 {
        let a = a.max(y_lo);
        let b = b.min(y_hi);
        if b <= a {
            return 0.0;
        }
        let cuts: Vec<f64> = knots.iter().copied().filter(|&k| k > a && k < b).collect();
        quadrature::composite(rho, a, b, &cuts, 1)
    };

    let mut mass: Vec<f64> = (0..spec.points)
        .map(|k| {
            let x = -big_l + h * k as f64;
            integrate(x - 0.5 * h, x + 0.5 * h)
        })
        .collect();
    let edge = big_l + 0.5 * h;
    let tail = |a: f64, b: f64| {
        let a = a.max(y_lo);
        let b = b.min(y_hi);
        if b <= a {
            return 0.0;
        }
        let panels = ((b - a) / 0.5).ceil().clamp(1.0, 400.0) as usize;
        let cuts: Vec<f64> = knots.iter().copied().filter(|&k| k > a && k < b).collect();
        quadrature::composite(rho, a, b, &cuts, panels)
    };
    let mut atom_pos = tail(edge, edge + 200.0);
    let mut atom_neg = tail(-edge - 200.0, -edge);
    if atom_pos + atom_neg > MAX_CLIPPED {
        return Err(Error::RangeTooSmall { clipped: atom_pos + atom_neg, limit: MAX_CLIPPED });
    }
    let total: f64 = mass.iter().sum::<f64>() + atom_pos + atom_neg;
    if !(total > 0.0) {
        return Err(Error::InvalidDistribution("conditional law has no mass".into()));
    }
    mass.iter_mut().for_each(|w| *w /= total);
    atom_pos /= total;
    atom_neg /= total;
    Ok(GridDistribution::new(spec, mass, atom_pos, atom_neg, state, 1))
}

fn fft_convolve(parts: &[(&[f64], usize)], out_len: usize) -> Vec<f64> {
    let size = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(size);
    let inverse = planner.plan_fft_inverse(size);
    let mut acc = vec![Complex64::new(1.0, 0.0); size];
    for &(values, power) in parts {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        buf.resize(size, Complex64::new(0.0, 0.0));
        forward.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a *= b.powu(power as u32);
        }
    }
    inverse.process(&mut acc);
    let scale = 1.0 / size as f64;
    acc.iter().take(out_len).map(|c| (c.re * scale).max(0.0)).collect()
}

/// Folds a full-range sum (centred at `center`) back onto the base grid.
fn clip_to_grid(
    spec: GridSpec,
    raw: Vec<f64>,
    center: usize,
    mut atom_pos: f64,
    mut atom_neg: f64,
    state: State,
    m: usize,
) -> GridDistribution {
    let n = spec.points;
    let offset = center as isize - (n / 2) as isize;
    let mut mass = vec![0.0; n];
    for (j, w) in raw.into_iter().enumerate() {
        let k = j as isize - offset;
        if k < 0 {
            atom_neg += w;
        } else if k >= n as isize {
            atom_pos += w;
        } else {
            mass[k as usize] = w;
        }
    }
    let total: f64 = mass.iter().sum::<f64>() + atom_pos + atom_neg;
    mass.iter_mut().for_each(|w| *w /= total);
    GridDistribution::new(spec, mass, atom_pos / total, atom_neg / total, state, m)
}

/// Law of the sum of `m` independent copies of `base`.
pub fn convolve_m(base: &GridDistribution, m: usize) -> Result<GridDistribution> {
    match m {
        0 => return Ok(GridDistribution::unit(base.spec, base.state)),
        1 => return Ok(base.clone()),
        _ => {}
    }
    let n = base.spec.points;
    let p = base.atom_pos;
    let q = base.atom_neg;
    let interior = base.interior_mass();
    let mi = m as i32;
    let all_interior = interior.powi(mi);
    let pos = ((1.0 - q).powi(mi) - all_interior).max(0.0);
    let neg = ((1.0 - p).powi(mi) - all_interior).max(0.0);
    let mixed = (1.0 - all_interior - pos - neg).max(0.0);

    let len = m * (n - 1) + 1;
    let mut raw = fft_convolve(&[(&base.mass, m)], len);
    let center = m * (n - 1) / 2;
    raw[center] += mixed;
    Ok(clip_to_grid(base.spec, raw, center, pos, neg, base.state, base.m * m))
}

/// Law of the sum of two independent grid variables on the same grid.
pub fn convolve_pair(a: &GridDistribution, b: &GridDistribution) -> Result<GridDistribution> {
    if a.spec != b.spec || a.state != b.state {
        return Err(Error::Config("convolving grids with different layouts or states".into()));
    }
    if a.m == 0 {
        return Ok(b.clone());
    }
    if b.m == 0 {
        return Ok(a.clone());
    }
    let n = a.spec.points;
    let (ia, ib) = (a.interior_mass(), b.interior_mass());
    let both = ia * ib;
    let pos = ((1.0 - a.atom_neg) * (1.0 - b.atom_neg) - both).max(0.0);
    let neg = ((1.0 - a.atom_pos) * (1.0 - b.atom_pos) - both).max(0.0);
    let mixed = (1.0 - both - pos - neg).max(0.0);
    let mut parts: Vec<(&[f64], usize)> = vec![(&a.mass, 1), (&b.mass, 1)];
    if std::ptr::eq(a, b) {
        parts = vec![(&a.mass, 2)];
    }
    let mut raw = fft_convolve(&parts, 2 * n - 1);
    let center = n - 1;
    raw[center] += mixed;
    Ok(clip_to_grid(a.spec, raw, center, pos, neg, a.state, a.m + b.m))
}

/// Both conditional laws of the aggregate log-LR of `m` signals.
#[derive(Debug, Clone)]
pub struct Aggregate {
    pub plus: GridDistribution,
    pub minus: GridDistribution,
}

impl Aggregate {
    pub fn m(&self) -> usize {
        self.plus.m
    }

    pub fn get(&self, state: State) -> &GridDistribution {
        match state {
            State::Plus => &self.plus,
            State::Minus => &self.minus,
        }
    }

    /// `(T₊(τ), T₋(τ))`.
    pub fn tails(&self, tau: f64) -> (f64, f64) {
        (self.plus.tail_prob(tau), self.minus.tail_prob(tau))
    }

    /// Tails at the efficient threshold `τ = (1 − s)/s`, evaluated in log
    /// space so that `s ∈ {0, 1}` map to the atoms.
    pub fn efficient_tails(&self, s: f64) -> (f64, f64) {
        if s <= 0.0 {
            return self.tails(f64::INFINITY);
        }
        if s >= 1.0 {
            return (1.0, 1.0);
        }
        let t = (-s).ln_1p() - s.ln();
        (self.plus.tail_prob_log(t), self.minus.tail_prob_log(t))
    }
}

/// Belief distribution together with cached aggregate laws for each `m`.
#[derive(Debug)]
pub struct Engine {
    dist: BeliefDistribution,
    spec: GridSpec,
    base: Arc<Aggregate>,
    cache: RwLock<HashMap<usize, Arc<Aggregate>>>,
}

impl Engine {
    pub fn new(dist: BeliefDistribution, spec: GridSpec) -> Result<Self> {
        let plus = single_log_lr(&dist, State::Plus, spec)?;
        let minus = single_log_lr(&dist, State::Minus, spec)?;
        let base = Arc::new(Aggregate { plus, minus });
        let mut cache = HashMap::new();
        cache.insert(1, base.clone());
        Ok(Self { dist, spec, base, cache: RwLock::new(cache) })
    }

    pub fn distribution(&self) -> &BeliefDistribution {
        &self.dist
    }

    pub fn grid_spec(&self) -> GridSpec {
        self.spec
    }

    /// Laws of `Σ_{k=1..m} log LR(s_k)`.
    pub fn aggregate(&self, m: usize) -> Result<Arc<Aggregate>> {
        if let Some(hit) = self.cache.read().expect("cache poisoned").get(&m) {
            return Ok(hit.clone());
        }
        let agg = Arc::new(Aggregate {
            plus: convolve_m(&self.base.plus, m)?,
            minus: convolve_m(&self.base.minus, m)?,
        });
        self.cache.write().expect("cache poisoned").insert(m, agg.clone());
        Ok(agg)
    }

    /// Laws of the others' likelihood ratio in a market of `n` agents.
    pub fn others(&self, n: usize) -> Result<Arc<Aggregate>> {
        if n == 0 {
            return Err(Error::Config("market size must be at least 1".into()));
        }
        self.aggregate(n - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn uniform(state: State) -> GridDistribution {
        single_log_lr(&BeliefDistribution::uniform(), state, GridSpec::default()).unwrap()
    }

    #[test]
    fn single_signal_tails_match_closed_form() {
        // P[s ≥ 1/2 | +] = ∫_{1/2}^1 2s ds = 3/4, and 1/4 under −.
        assert_abs_diff_eq!(uniform(State::Plus).tail_prob(1.0), 0.75, epsilon = 1e-4);
        assert_abs_diff_eq!(uniform(State::Minus).tail_prob(1.0), 0.25, epsilon = 1e-4);
        // P[s ≥ 1/4 | +] = 15/16 at τ = 1/3.
        assert_abs_diff_eq!(uniform(State::Plus).tail_prob(1.0 / 3.0), 15.0 / 16.0, epsilon = 1e-5);
        assert_abs_diff_eq!(uniform(State::Minus).tail_prob(1.0 / 3.0), 9.0 / 16.0, epsilon = 1e-5);
    }

    #[test]
    fn masses_are_normalized() {
        for state in State::BOTH {
            let g = uniform(state);
            assert_abs_diff_eq!(g.total_mass(), 1.0, epsilon = 1e-10);
            assert!(g.mass.iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn symmetric_medians_mirror() {
        let d = BeliefDistribution::beta_symmetric(2.0).unwrap();
        let plus = single_log_lr(&d, State::Plus, GridSpec::default()).unwrap();
        let minus = single_log_lr(&d, State::Minus, GridSpec::default()).unwrap();
        assert!((plus.median() + minus.median()).abs() <= GridSpec::default().step() + 1e-12);
    }

    #[test]
    fn tiny_range_is_rejected() {
        let spec = GridSpec { points: 257, half_range: 3.0 };
        let err = single_log_lr(&BeliefDistribution::uniform(), State::Plus, spec).unwrap_err();
        assert!(matches!(err, Error::RangeTooSmall { .. }));
    }

    #[test]
    fn bad_grid_size_is_rejected() {
        let spec = GridSpec { points: 1000, half_range: 40.0 };
        assert!(single_log_lr(&BeliefDistribution::uniform(), State::Plus, spec).is_err());
    }

    #[test]
    fn convolve_zero_and_one() {
        let base = uniform(State::Plus);
        let unit = convolve_m(&base, 0).unwrap();
        assert_eq!(unit.tail_prob(1.0), 1.0);
        assert_eq!(unit.tail_prob(1.0001), 0.0);
        assert_eq!(unit.tail_prob(0.5), 1.0);
        let one = convolve_m(&base, 1).unwrap();
        let diff = one.mass.iter().zip(&base.mass).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-12);
    }

    #[test]
    fn two_signal_tail_matches_quadrature() {
        // P[s₁ + s₂ ≥ 1 | +] for uniform beliefs, by 2-D Gauss–Legendre.
        let oracle = quadrature::composite(
            |s1| 2.0 * s1 * quadrature::gauss(|s2| 2.0 * s2, 1.0 - s1, 1.0),
            0.0,
            1.0,
            &[],
            8,
        );
        assert_abs_diff_eq!(oracle, 5.0 / 6.0, epsilon = 1e-12);
        let g = convolve_m(&uniform(State::Plus), 2).unwrap();
        assert_abs_diff_eq!(g.tail_prob(1.0), oracle, epsilon = 1e-3);
    }

    #[test]
    fn associativity() {
        let base = uniform(State::Minus);
        let whole = convolve_m(&base, 5).unwrap();
        let split = convolve_pair(&convolve_m(&base, 2).unwrap(), &convolve_m(&base, 3).unwrap()).unwrap();
        let diff = whole.mass.iter().zip(&split.mass).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-9, "{diff}");
    }

    #[test]
    fn tails_are_monotone_and_ordered() {
        let engine = Engine::new(BeliefDistribution::uniform(), GridSpec::default()).unwrap();
        for m in [1, 2, 4] {
            let agg = engine.aggregate(m).unwrap();
            let mut prev = (1.0, 1.0);
            for k in 0..=400 {
                let t = -10.0 + 0.05 * k as f64;
                let tp = agg.plus.tail_prob_log(t);
                let tm = agg.minus.tail_prob_log(t);
                assert!(tp <= prev.0 + 1e-15 && tm <= prev.1 + 1e-15);
                assert!(tp + 1e-12 >= tm);
                prev = (tp, tm);
            }
        }
    }

    #[test]
    fn sure_and_impossible_thresholds() {
        let g = convolve_m(&uniform(State::Plus), 3).unwrap();
        assert_eq!(g.tail_prob(0.0), 1.0);
        assert!(g.tail_prob(1e300) <= g.atom_pos + 1e-12);
        assert_eq!(g.tail_prob(f64::INFINITY), g.atom_pos);
    }
}
