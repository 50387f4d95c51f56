//! Sequential accept/reject decisions with observational learning.
//!
//! Signals are binary: each agent's private belief is `l < 1/2` or
//! `h > 1/2`. Agents decide in order, each seeing the actions of an observed
//! subset of predecessors, and accept iff their posterior likelihood ratio
//! is at least 1.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::first_best::fmt;
use crate::likelihood::Engine;
use crate::mechanisms::{designer_value, optimal_mechanism, MonotoneThresholdMechanism};
use crate::rng::{self, Moments};

/// Largest custom network handled by exact enumeration.
pub const MAX_CUSTOM_AGENTS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinarySignalModel {
    pub l: f64,
    pub h: f64,
}

impl BinarySignalModel {
    pub fn new(l: f64, h: f64) -> Result<Self> {
        if !(l > 0.0 && l < 0.5 && h > 0.5 && h < 1.0) {
            return Err(Error::InvalidDistribution(format!(
                "binary signals need 0 < l < 1/2 < h < 1, got l = {l}, h = {h}"
            )));
        }
        Ok(Self { l, h })
    }

    /// Probability of the high signal, fixed by the beliefs averaging to 1/2.
    pub fn p_h(&self) -> f64 {
        (0.5 - self.l) / (self.h - self.l)
    }

    /// Probability of the high signal in a given state.
    pub fn p_h_given(&self, plus: bool) -> f64 {
        if plus {
            2.0 * self.h * self.p_h()
        } else {
            2.0 * (1.0 - self.h) * self.p_h()
        }
    }

    fn log_lr(&self, high: bool) -> f64 {
        let s = if high { self.h } else { self.l };
        s.ln() - (1.0 - s).ln()
    }

    fn signal_prob(&self, high: bool, plus: bool) -> f64 {
        let p = self.p_h_given(plus);
        if high {
            p
        } else {
            1.0 - p
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CascadeVerdict {
    RejectCascade,
    AcceptCascade,
}

/// Which herd a first action triggers under full observation. The boundary
/// `l + h = 1` falls in the acceptance branch.
pub fn cascade_condition(m: &BinarySignalModel) -> CascadeVerdict {
    if m.l + m.h < 1.0 {
        CascadeVerdict::RejectCascade
    } else {
        CascadeVerdict::AcceptCascade
    }
}

/// Who observes whom. `observe[i]` lists the 0-based predecessors agent `i`
/// sees.
#[derive(Debug, Clone, PartialEq)]
pub enum QueueNetwork {
    Full(usize),
    Empty(usize),
    Custom(Vec<Vec<usize>>),
}

/// JSON form: `{"n": 5, "observe": "full"}` or, with 1-based indices,
/// `{"n": 3, "observe": [[], [1], [1, 2]]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub n: usize,
    pub observe: Observe,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Observe {
    Tag(String),
    Lists(Vec<Vec<usize>>),
}

impl QueueNetwork {
    pub fn n(&self) -> usize {
        match self {
            QueueNetwork::Full(n) | QueueNetwork::Empty(n) => *n,
            QueueNetwork::Custom(obs) => obs.len(),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            QueueNetwork::Full(_) => "full",
            QueueNetwork::Empty(_) => "empty",
            QueueNetwork::Custom(_) => "custom",
        }
    }

    /// Builds a custom network, checking that everyone only sees predecessors.
    pub fn custom(observe: Vec<Vec<usize>>) -> Result<Self> {
        if observe.is_empty() {
            return Err(Error::Config("network needs at least one agent".into()));
        }
        if observe.len() > MAX_CUSTOM_AGENTS {
            return Err(Error::UnsupportedNetwork(format!(
                "custom networks are limited to {MAX_CUSTOM_AGENTS} agents, got {}",
                observe.len()
            )));
        }
        for (i, b) in observe.iter().enumerate() {
            if let Some(&j) = b.iter().find(|&&j| j >= i) {
                return Err(Error::Config(format!("agent {} cannot observe agent {}", i + 1, j + 1)));
            }
        }
        Ok(QueueNetwork::Custom(observe))
    }

    /// Observation sets of every agent.
    pub fn observe_sets(&self) -> Vec<Vec<usize>> {
        match self {
            QueueNetwork::Full(n) => (0..*n).map(|i| (0..i).collect()).collect(),
            QueueNetwork::Empty(n) => vec![Vec::new(); *n],
            QueueNetwork::Custom(obs) => obs.clone(),
        }
    }

    pub fn from_spec(spec: &NetworkSpec) -> Result<Self> {
        if spec.n == 0 {
            return Err(Error::Config("network needs at least one agent".into()));
        }
        match &spec.observe {
            Observe::Tag(t) if t == "full" => Ok(QueueNetwork::Full(spec.n)),
            Observe::Tag(t) if t == "empty" => Ok(QueueNetwork::Empty(spec.n)),
            Observe::Tag(t) => Err(Error::Config(format!("unknown network tag {t:?}"))),
            Observe::Lists(lists) => {
                if lists.len() != spec.n {
                    return Err(Error::Config(format!(
                        "network lists {} observation sets for {} agents",
                        lists.len(),
                        spec.n
                    )));
                }
                let zero_based = lists
                    .iter()
                    .map(|b| {
                        b.iter()
                            .map(|&j| j.checked_sub(1).ok_or_else(|| Error::Config("agents are numbered from 1".into())))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                QueueNetwork::custom(zero_based)
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_spec(&serde_json::from_str(text)?)
    }
}

/// Decision of each agent as a function of the observed actions and the
/// own signal, computed exactly.
struct DecisionTables {
    observe: Vec<Vec<usize>>,
    /// `rules[i][pattern] = (accept on l, accept on h)`.
    rules: Vec<HashMap<u32, (bool, bool)>>,
}

fn pattern(actions: &[bool], observed: &[usize]) -> u32 {
    observed.iter().enumerate().fold(0, |acc, (k, &j)| acc | (u32::from(actions[j]) << k))
}

impl DecisionTables {
    fn build(observe: Vec<Vec<usize>>, m: &BinarySignalModel) -> Self {
        let n = observe.len();
        // Every signal profile of the agents decided so far, with its
        // probability in each state and the actions it produced.
        let mut profiles: Vec<(f64, f64, Vec<bool>)> = vec![(1.0, 1.0, Vec::new())];
        let mut signals: Vec<Vec<bool>> = vec![Vec::new()];
        let mut rules = Vec::with_capacity(n);
        for (i, obs) in observe.iter().enumerate() {
            let mut like: HashMap<u32, (f64, f64)> = HashMap::new();
            for (pp, pm, actions) in &profiles {
                let e = like.entry(pattern(actions, obs)).or_insert((0.0, 0.0));
                e.0 += pp;
                e.1 += pm;
            }
            let rule: HashMap<u32, (bool, bool)> = like
                .iter()
                .map(|(&k, &(pp, pm))| {
                    let public = pp.ln() - pm.ln();
                    (k, (public + m.log_lr(false) >= 0.0, public + m.log_lr(true) >= 0.0))
                })
                .collect();
            if i + 1 < n {
                let mut next = Vec::with_capacity(2 * profiles.len());
                let mut next_signals = Vec::with_capacity(2 * profiles.len());
                for ((pp, pm, actions), sig) in profiles.iter().zip(&signals) {
                    let (on_l, on_h) = rule[&pattern(actions, obs)];
                    for high in [false, true] {
                        let mut a = actions.clone();
                        a.push(if high { on_h } else { on_l });
                        let mut s = sig.clone();
                        s.push(high);
                        next.push((pp * m.signal_prob(high, true), pm * m.signal_prob(high, false), a));
                        next_signals.push(s);
                    }
                }
                profiles = next;
                signals = next_signals;
            }
            rules.push(rule);
        }
        Self { observe, rules }
    }

    fn decide(&self, i: usize, actions: &[bool], high: bool) -> (bool, bool) {
        let (on_l, on_h) = self.rules[i][&pattern(actions, &self.observe[i])];
        (if high { on_h } else { on_l }, on_l == on_h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PositionRate {
    pub position: usize,
    pub acceptance_rate: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CascadeStats {
    /// Trials in which some agent acted regardless of their signal.
    pub cascade_trials: u64,
    pub reject_cascades: u64,
    pub accept_cascades: u64,
    /// Mean position (1-based) at which the first uninformative action occurred.
    pub mean_onset: Option<f64>,
    pub first_rejected: u64,
    /// Trials where agent 1 rejected and so did every later agent.
    pub first_rejected_all_reject: u64,
    /// Actions after a cascade began that differed from the cascade action.
    pub post_cascade_deviations: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationResult {
    pub network: &'static str,
    pub n: usize,
    pub model: BinarySignalModel,
    pub p_h: f64,
    pub verdict: CascadeVerdict,
    /// Set when `l + h = 1`, where a second agent is indifferent after a
    /// rejection and acceptance at indifference decides the branch.
    pub boundary_tie: bool,
    pub trials: u64,
    pub seed: u64,
    pub positions: Vec<PositionRate>,
    pub mean_acceptance: f64,
    pub mean_acceptance_se: f64,
    pub cascades: CascadeStats,
}

#[derive(Debug, Clone, Default)]
struct Tally {
    accepts: Vec<u64>,
    per_trial: Moments,
    stats: CascadeStats,
    onset_sum: f64,
}

impl Tally {
    fn merge(mut self, other: &Tally) -> Tally {
        for (a, b) in self.accepts.iter_mut().zip(&other.accepts) {
            *a += b;
        }
        self.per_trial = self.per_trial.merge(&other.per_trial);
        let (s, o) = (&mut self.stats, &other.stats);
        s.cascade_trials += o.cascade_trials;
        s.reject_cascades += o.reject_cascades;
        s.accept_cascades += o.accept_cascades;
        s.first_rejected += o.first_rejected;
        s.first_rejected_all_reject += o.first_rejected_all_reject;
        s.post_cascade_deviations += o.post_cascade_deviations;
        self.onset_sum += other.onset_sum;
        self
    }
}

/// One trial: returns each agent's action and whether it ignored the signal.
fn play<R: Rng>(
    net: &QueueNetwork,
    tables: Option<&DecisionTables>,
    m: &BinarySignalModel,
    rng: &mut R,
    actions: &mut Vec<bool>,
    blind: &mut Vec<bool>,
) {
    let n = net.n();
    actions.clear();
    blind.clear();
    let plus = rng.gen::<bool>();
    let p = m.p_h_given(plus);
    let mut public = 0.0;
    for i in 0..n {
        let high = rng.gen::<f64>() < p;
        let (accept, uninformative) = match net {
            QueueNetwork::Empty(_) => (high, false),
            QueueNetwork::Full(_) => {
                let on_l = public + m.log_lr(false) >= 0.0;
                let on_h = public + m.log_lr(true) >= 0.0;
                let accept = if high { on_h } else { on_l };
                if on_l != on_h {
                    public += m.log_lr(accept);
                }
                (accept, on_l == on_h)
            }
            QueueNetwork::Custom(_) => tables.expect("custom networks carry tables").decide(i, actions, high),
        };
        actions.push(accept);
        blind.push(uninformative);
    }
}

/// Simulates `trials` independent runs of the queue.
pub fn simulate_queue(
    net: &QueueNetwork,
    m: &BinarySignalModel,
    trials: u64,
    seed: u64,
    workers: usize,
) -> Result<SimulationResult> {
    let n = net.n();
    if n == 0 || trials == 0 {
        return Err(Error::Config("need at least one agent and one trial".into()));
    }
    let tables = match net {
        QueueNetwork::Custom(obs) => {
            if obs.len() > MAX_CUSTOM_AGENTS {
                return Err(Error::UnsupportedNetwork(format!(
                    "custom networks are limited to {MAX_CUSTOM_AGENTS} agents, got {}",
                    obs.len()
                )));
            }
            Some(DecisionTables::build(obs.clone(), m))
        }
        _ => None,
    };
    let full = matches!(net, QueueNetwork::Full(_));
    let parts = rng::run_chunks(seed, trials as usize, workers, |_, rng, count| {
        let mut t = Tally { accepts: vec![0; n], ..Default::default() };
        let (mut actions, mut blind) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..count {
            play(net, tables.as_ref(), m, rng, &mut actions, &mut blind);
            for (c, &a) in t.accepts.iter_mut().zip(&actions) {
                *c += u64::from(a);
            }
            t.per_trial.push(actions.iter().filter(|&&a| a).count() as f64 / n as f64);
            if let Some(onset) = blind.iter().position(|&b| b) {
                t.stats.cascade_trials += 1;
                t.onset_sum += (onset + 1) as f64;
                if actions[onset] {
                    t.stats.accept_cascades += 1;
                } else {
                    t.stats.reject_cascades += 1;
                }
                if full {
                    t.stats.post_cascade_deviations +=
                        actions[onset..].iter().filter(|&&a| a != actions[onset]).count() as u64;
                }
            }
            if !actions[0] {
                t.stats.first_rejected += 1;
                if actions.iter().all(|&a| !a) {
                    t.stats.first_rejected_all_reject += 1;
                }
            }
        }
        t
    });
    let total = parts.iter().skip(1).fold(parts[0].clone(), |acc, t| acc.merge(t));
    let trials_f = trials as f64;
    let positions = total
        .accepts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let p = c as f64 / trials_f;
            PositionRate { position: i + 1, acceptance_rate: p, se: (p * (1.0 - p) / trials_f).sqrt() }
        })
        .collect();
    let mut cascades = total.stats;
    if cascades.cascade_trials > 0 {
        cascades.mean_onset = Some(total.onset_sum / cascades.cascade_trials as f64);
    }
    Ok(SimulationResult {
        network: net.tag(),
        n,
        model: *m,
        p_h: m.p_h(),
        verdict: cascade_condition(m),
        boundary_tie: (m.l + m.h - 1.0).abs() < 1e-12,
        trials,
        seed,
        positions,
        mean_acceptance: total.per_trial.mean(),
        mean_acceptance_se: total.per_trial.std_error(),
        cascades,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ObservationVerdict {
    RejectCascadeDominatedByConcealment,
    AcceptCascadeDominatesConcealment,
    Inconclusive,
}

/// Compares mean acceptance with and without observation of past actions.
pub fn compare_observation(full: &SimulationResult, empty: &SimulationResult) -> ObservationVerdict {
    let gap = full.mean_acceptance - empty.mean_acceptance;
    let se = full.mean_acceptance_se.hypot(empty.mean_acceptance_se);
    if gap < -3.0 * se {
        ObservationVerdict::RejectCascadeDominatedByConcealment
    } else if gap > 3.0 * se {
        ObservationVerdict::AcceptCascadeDominatesConcealment
    } else {
        ObservationVerdict::Inconclusive
    }
}

/// Writes `(position, acceptance_rate, se)` rows.
pub fn write_rates_csv(path: &Path, result: &SimulationResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["position", "acceptance_rate", "se"])?;
    for p in &result.positions {
        w.write_record([p.position.to_string(), fmt(p.acceptance_rate), fmt(p.se)])?;
    }
    w.flush()?;
    Ok(())
}

/// Designer value of each agent in a queue where agent `i` (1-based) is
/// treated by `mechs[i − 1]`, a mechanism over `i` agents.
pub fn queue_threshold_mechanism(mechs: &[MonotoneThresholdMechanism], engine: &Engine) -> Result<Vec<f64>> {
    mechs
        .iter()
        .enumerate()
        .map(|(i, mech)| {
            if mech.n != i + 1 {
                return Err(Error::WrongMarketSize(mech.n));
            }
            designer_value(mech, engine)
        })
        .collect()
}

/// Optimal monotone threshold queue mechanism for `agents` agents: agent `i`
/// gets the optimum of the `i`-agent problem.
pub fn optimal_queue(engine: &Engine, agents: usize, k: usize) -> Result<Vec<MonotoneThresholdMechanism>> {
    (1..=agents).map(|i| optimal_mechanism(engine, i, k).map(|o| o.mechanism)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::BeliefDistribution;
    use crate::likelihood::GridSpec;
    use approx::assert_abs_diff_eq;

    #[test]
    fn model_is_bayes_plausible() {
        let m = BinarySignalModel::new(0.2, 0.7).unwrap();
        assert_abs_diff_eq!(m.p_h(), 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(m.p_h() * m.h + (1.0 - m.p_h()) * m.l, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(0.5 * (m.p_h_given(true) + m.p_h_given(false)), m.p_h(), epsilon = 1e-12);
        assert!(BinarySignalModel::new(0.6, 0.7).is_err());
    }

    #[test]
    fn cascade_branches() {
        let v = |l, h| cascade_condition(&BinarySignalModel::new(l, h).unwrap());
        assert_eq!(v(0.2, 0.7), CascadeVerdict::RejectCascade);
        assert_eq!(v(0.25, 0.8), CascadeVerdict::AcceptCascade);
        assert_eq!(v(0.25, 0.75), CascadeVerdict::AcceptCascade);
    }

    #[test]
    fn network_json() {
        let full = QueueNetwork::from_json(r#"{"n": 5, "observe": "full"}"#).unwrap();
        assert_eq!(full, QueueNetwork::Full(5));
        let c = QueueNetwork::from_json(r#"{"n": 3, "observe": [[], [1], [1, 2]]}"#).unwrap();
        assert_eq!(c.observe_sets(), QueueNetwork::Full(3).observe_sets());
        assert!(QueueNetwork::from_json(r#"{"n": 2, "observe": [[], [2]]}"#).is_err());
        let big = vec![Vec::new(); 13];
        assert!(matches!(QueueNetwork::custom(big), Err(Error::UnsupportedNetwork(_))));
    }

    #[test]
    fn custom_full_matches_recursion() {
        let m = BinarySignalModel::new(0.3, 0.8).unwrap();
        let full = simulate_queue(&QueueNetwork::Full(6), &m, 20_000, 3, 2).unwrap();
        let custom = QueueNetwork::custom(QueueNetwork::Full(6).observe_sets()).unwrap();
        let exact = simulate_queue(&custom, &m, 20_000, 3, 2).unwrap();
        assert_eq!(full.positions, exact.positions);
    }

    #[test]
    fn rejection_cascade() {
        let m = BinarySignalModel::new(0.2, 0.7).unwrap();
        let r = simulate_queue(&QueueNetwork::Full(8), &m, 50_000, 11, 4).unwrap();
        assert!(r.cascades.first_rejected > 0);
        assert_eq!(r.cascades.first_rejected, r.cascades.first_rejected_all_reject);
        assert_eq!(r.cascades.post_cascade_deviations, 0);
        let e = simulate_queue(&QueueNetwork::Empty(8), &m, 50_000, 11, 4).unwrap();
        assert_eq!(compare_observation(&r, &e), ObservationVerdict::RejectCascadeDominatedByConcealment);
    }

    #[test]
    fn single_agent_queue_value() {
        let e = Engine::new(BeliefDistribution::uniform(), GridSpec::default()).unwrap();
        let mechs = optimal_queue(&e, 1, 201).unwrap();
        let v = queue_threshold_mechanism(&mechs, &e).unwrap();
        assert_abs_diff_eq!(v[0], 0.5, epsilon = 1e-6);
        let d = e.distribution().clone();
        let none: Vec<_> = (1..=3).map(|i| MonotoneThresholdMechanism::exclude_all(i, &d)).collect();
        assert_eq!(queue_threshold_mechanism(&none, &e).unwrap(), vec![0.0; 3]);
    }
}
