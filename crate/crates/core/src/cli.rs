//! Command-line front end: each subcommand loads a [`RunConfig`], runs one
//! stage of the toolkit and writes CSV/JSON artifacts to the output
//! directory. Everything except the `metadata` block of `summary.json` is a
//! deterministic function of the config and seed.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::distributions::{BeliefDistribution, DistributionSpec};
use crate::error::{Error, Result};
use crate::first_best::{efficient_value, fmt, DEFAULT_K};
use crate::likelihood::{Engine, GridSpec};
use crate::mechanisms::{
    asymptotic_family, certificate_report, designer_value, export_persuasion_menu, optimal_mechanism,
    solve_logconcave, MonotoneThresholdMechanism,
};
use crate::optimizer::{objective_weights, solve_asymptotic, write_solution_csv};
use crate::rng;
use crate::social_sim::{
    compare_observation, simulate_queue, write_rates_csv, BinarySignalModel, NetworkSpec, Observe,
    QueueNetwork,
};
use crate::verification::{check_epic, check_feasibility, mc_value, FeasibilityReport, MIN_SAMPLES};

#[derive(Debug, Parser)]
#[command(name = "mechlearn", version, about = "Optimal no-transfer allocation mechanisms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Belief grid size K.
    #[arg(long = "grid-k", global = true)]
    pub grid_k: Option<usize>,
    /// Market size.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Comma-separated market sizes for sweep-n.
    #[arg(long = "n-list", global = true, value_delimiter = ',')]
    pub n_list: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Solve the reduced program and extract, certify and verify the mechanism.
    Solve,
    /// Solve across market sizes and compare with the large-market family.
    SweepN,
    /// Simulate queue-based allocation with observational learning.
    Simulate,
    /// Verify a mechanism JSON file.
    Verify {
        #[arg(long)]
        mechanism: Option<PathBuf>,
    },
    /// Export the persuasion menu of a two-agent mechanism.
    ExportMenu {
        #[arg(long)]
        mechanism: Option<PathBuf>,
    },
}

/// Either a distribution spec or a path to a `(s, density)` CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DistributionInput {
    Spec(DistributionSpec),
    Csv(PathBuf),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub l: f64,
    pub h: f64,
    pub trials: u64,
    pub networks: Vec<NetworkSpec>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            l: 0.2,
            h: 0.7,
            trials: 100_000,
            networks: vec![
                NetworkSpec { n: 10, observe: Observe::Tag("full".into()) },
                NetworkSpec { n: 10, observe: Observe::Tag("empty".into()) },
            ],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub distribution: DistributionInput,
    pub n: usize,
    pub n_list: Vec<usize>,
    /// Belief grid size K.
    pub grid_k: usize,
    /// Log-likelihood grid size N.
    pub grid_points: usize,
    /// Log-likelihood half-range L.
    pub half_range: f64,
    pub verify_grid: usize,
    pub tol: f64,
    pub seed: u64,
    /// Monte Carlo draws for value checks; 0 skips them.
    pub mc_samples: usize,
    pub workers: usize,
    pub output_dir: PathBuf,
    pub mechanism: Option<PathBuf>,
    pub simulation: SimulationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let grid = GridSpec::default();
        Self {
            distribution: DistributionInput::Spec(DistributionSpec::Uniform),
            n: 2,
            n_list: vec![2, 3, 5, 10, 20],
            grid_k: DEFAULT_K,
            grid_points: grid.points,
            half_range: grid.half_range,
            verify_grid: crate::verification::DEFAULT_GRID,
            tol: crate::verification::DEFAULT_TOL,
            seed: 0,
            mc_samples: 0,
            workers: rng::DEFAULT_WORKERS,
            output_dir: PathBuf::from("out"),
            mechanism: None,
            simulation: SimulationConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads a config file; relative input paths resolve against its folder.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.distribution {
            DistributionInput::Csv(p) => fix(p),
            DistributionInput::Spec(DistributionSpec::Tabulated { path: Some(p), .. }) => {
                let mut buf = PathBuf::from(&*p);
                fix(&mut buf);
                *p = buf.to_string_lossy().into_owned();
            }
            _ => {}
        }
        if let Some(p) = &mut self.mechanism {
            fix(p);
        }
    }

    /// Applies command-line overrides.
    pub fn apply(&mut self, cli: &Cli) {
        if let Some(out) = &cli.out {
            self.output_dir = out.clone();
        }
        if let Some(seed) = cli.seed {
            self.seed = seed;
        }
        if let Some(k) = cli.grid_k {
            self.grid_k = k;
        }
        if let Some(n) = cli.n {
            self.n = n;
            for net in &mut self.simulation.networks {
                if matches!(net.observe, Observe::Tag(_)) {
                    net.n = n;
                }
            }
        }
        if let Some(list) = &cli.n_list {
            self.n_list = list.clone();
        }
        if let Command::Verify { mechanism: Some(p) } | Command::ExportMenu { mechanism: Some(p) } = &cli.command {
            self.mechanism = Some(p.clone());
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.tol > 0.0) || !(self.half_range > 0.0) {
            return bad("tolerances and the log-likelihood range must be positive".into());
        }
        if self.n == 0 {
            return bad("market size n must be at least 1".into());
        }
        if self.grid_k < 3 || self.verify_grid < 2 {
            return bad("grid sizes are too small".into());
        }
        if self.n_list.is_empty() || self.n_list.contains(&0) || self.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return bad(format!("n_list must be increasing and positive, got {:?}", self.n_list));
        }
        if self.mc_samples != 0 && self.mc_samples < MIN_SAMPLES {
            return bad(format!("mc_samples must be 0 or at least {MIN_SAMPLES}"));
        }
        self.grid_spec().check()?;
        let path = match &self.distribution {
            DistributionInput::Csv(p) => Some(p.clone()),
            DistributionInput::Spec(DistributionSpec::Tabulated { path, .. }) => path.as_ref().map(PathBuf::from),
            _ => None,
        };
        for p in path.iter().chain(&self.mechanism) {
            if !p.exists() {
                return bad(format!("file {} does not exist", p.display()));
            }
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec { points: self.grid_points, half_range: self.half_range }
    }

    pub fn build_distribution(&self) -> Result<BeliefDistribution> {
        match &self.distribution {
            DistributionInput::Spec(spec) => spec.build(None),
            DistributionInput::Csv(path) => {
                DistributionSpec::Tabulated { path: Some(path.to_string_lossy().into_owned()), points: None }.build(None)
            }
        }
    }

    pub fn engine(&self) -> Result<Engine> {
        Engine::new(self.build_distribution()?, self.grid_spec())
    }
}

fn metadata() -> Value {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    json!({ "version": env!("CARGO_PKG_VERSION"), "timestamp_unix": secs })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_summary(cfg: &RunConfig, command: &str, body: Value) -> Result<()> {
    let mut summary = json!({ "command": command, "seed": cfg.seed, "config": cfg });
    if let (Value::Object(dst), Value::Object(src)) = (&mut summary, body) {
        dst.extend(src);
    }
    summary["metadata"] = metadata();
    write_json(&cfg.output_dir.join("summary.json"), &summary)
}

/// Interim feasibility, ex-post check and, if configured, a Monte Carlo value.
fn full_report(mech: &MonotoneThresholdMechanism, engine: &Engine, cfg: &RunConfig) -> Result<FeasibilityReport> {
    let mut report = check_feasibility(mech, engine, cfg.verify_grid, cfg.tol)?.merge(check_epic(mech, engine, cfg.tol)?);
    if cfg.mc_samples > 0 {
        report.value_mc = Some(mc_value(mech, engine, cfg.mc_samples, cfg.seed, cfg.workers)?);
    }
    Ok(report)
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<()> {
    let engine = cfg.engine()?;
    let d = engine.distribution();
    let out = &cfg.output_dir;
    let opt = optimal_mechanism(&engine, cfg.n, cfg.grid_k)?;
    let mech = &opt.mechanism;
    opt.bounds.write_csv(&out.join("envelope.csv"))?;
    write_solution_csv(&out.join("lp_solution.csv"), &opt.solution.utility, &opt.bounds, &opt.structure)?;
    fs::write(out.join("mechanism.json"), mech.to_json()? + "\n")?;

    let certified = if d.is_log_concave() && d.is_symmetric() && cfg.n >= 2 {
        match solve_logconcave(&engine, cfg.n) {
            Ok((sol, lc)) => Some((sol, certificate_report(&lc, d)?, lc)),
            Err(Error::NotLogConcave) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let cert_json = match &certified {
        Some((_, c, lc)) => {
            fs::write(out.join("mechanism_certified.json"), lc.to_json()? + "\n")?;
            json!({ "applicable": true, "report": c })
        }
        None => json!({ "applicable": false }),
    };
    write_json(&out.join("certificate.json"), &cert_json)?;
    let logconcave = certified.as_ref().map(|(sol, _, _)| sol);

    let report = full_report(mech, &engine, cfg)?;
    write_json(&out.join("feasibility.json"), &report)?;

    let thresholds = mech.thresholds();
    write_summary(
        cfg,
        "solve",
        json!({
            "n": cfg.n,
            "efficient_value": efficient_value(&engine, cfg.n)?,
            "optimal_value": opt.solution.value,
            "designer_value": designer_value(mech, &engine)?,
            "s_min": thresholds.map(|t| t.0),
            "s_max": thresholds.map(|t| t.1),
            "kinks": opt.structure.kinks,
            "exclusion_end": opt.structure.exclusion_end(&opt.solution.utility),
            "pieces": mech.pieces.len(),
            "lp": opt.solution.stats,
            "logconcave": logconcave,
            "certificate_passed": certified.as_ref().map(|(_, c, _)| c.passed),
            "feasibility_passed": report.passed,
        }),
    )?;
    match certified.and_then(|(_, c, _)| c.failure) {
        Some(msg) => Err(Error::CertificateFailed(msg)),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub value: f64,
    pub s_min: Option<f64>,
    pub s_max: Option<f64>,
    pub gap_to_asymptotic: f64,
    pub designer_value: f64,
    pub family_value: f64,
    pub family_s_max: f64,
}

/// Solves each market size and evaluates the large-market family there.
pub fn sweep(engine: &Engine, n_list: &[usize], k: usize) -> Result<(f64, Vec<SweepRow>, f64)> {
    let limit = solve_asymptotic(&objective_weights(engine.distribution(), k))?;
    let solved = rng::with_pool(|| {
        n_list
            .par_iter()
            .map(|&n| -> Result<(SweepRow, Vec<f64>)> {
                let opt = optimal_mechanism(engine, n, k)?;
                let family = asymptotic_family(engine, n, &limit.utility)?;
                let family_value = designer_value(&family, engine)?;
                let thresholds = opt.mechanism.thresholds();
                let row = SweepRow {
                    n,
                    value: opt.solution.value,
                    s_min: thresholds.map(|t| t.0),
                    s_max: thresholds.map(|t| t.1),
                    gap_to_asymptotic: (opt.solution.value - family_value).abs(),
                    designer_value: designer_value(&opt.mechanism, engine)?,
                    family_value,
                    family_s_max: family.pieces.last().map_or(1.0, |p| p.lo),
                };
                Ok((row, opt.bounds.upper))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let envelope_min_increment = solved
        .windows(2)
        .flat_map(|w| w[1].1.iter().zip(&w[0].1).map(|(b, a)| b - a).collect::<Vec<_>>())
        .fold(f64::INFINITY, f64::min);
    Ok((limit.value, solved.into_iter().map(|(r, _)| r).collect(), envelope_min_increment))
}

fn opt_cell(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

pub fn cmd_sweep_n(cfg: &RunConfig) -> Result<()> {
    let engine = cfg.engine()?;
    let (v_inf, rows, envelope_min_increment) = sweep(&engine, &cfg.n_list, cfg.grid_k)?;
    let mut w = csv::Writer::from_path(cfg.output_dir.join("sweep.csv"))?;
    w.write_record(["n", "V_n", "s_min", "s_max", "gap_to_asymptotic", "designer_value", "family_value", "family_s_max"])?;
    for r in &rows {
        w.write_record([
            r.n.to_string(),
            fmt(r.value),
            opt_cell(r.s_min),
            opt_cell(r.s_max),
            fmt(r.gap_to_asymptotic),
            fmt(r.designer_value),
            fmt(r.family_value),
            fmt(r.family_s_max),
        ])?;
    }
    w.flush()?;
    let slack = 1e-6;
    let nondecreasing = |f: &dyn Fn(&SweepRow) -> f64| rows.windows(2).all(|w| f(&w[1]) >= f(&w[0]) - slack);
    write_summary(
        cfg,
        "sweep-n",
        json!({
            "asymptotic_value": v_inf,
            "rows": rows,
            "value_nondecreasing": nondecreasing(&|r| r.value),
            "s_max_nondecreasing": nondecreasing(&|r| r.s_max.unwrap_or(f64::NAN)),
            "gap_nonincreasing": nondecreasing(&|r| -r.gap_to_asymptotic),
            "envelope_min_increment": envelope_min_increment,
        }),
    )
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let sim = &cfg.simulation;
    let model = BinarySignalModel::new(sim.l, sim.h)?;
    let mut results = Vec::new();
    for spec in &sim.networks {
        let net = QueueNetwork::from_spec(spec)?;
        results.push(simulate_queue(&net, &model, sim.trials, cfg.seed, cfg.workers)?);
    }
    for (i, r) in results.iter().enumerate() {
        let duplicate = results.iter().filter(|o| o.network == r.network).count() > 1;
        let name =
            if duplicate { format!("rates_{}_{}.csv", r.network, i + 1) } else { format!("rates_{}.csv", r.network) };
        write_rates_csv(&cfg.output_dir.join(name), r)?;
    }
    let full = results.iter().find(|r| r.network == "full");
    let empty = results.iter().find(|r| r.network == "empty");
    let comparison = match (full, empty) {
        (Some(f), Some(e)) => json!(compare_observation(f, e)),
        _ => Value::Null,
    };
    write_json(&cfg.output_dir.join("simulation.json"), &json!({ "results": results, "comparison": comparison }))?;
    write_summary(
        cfg,
        "simulate",
        json!({
            "cascade_condition": crate::social_sim::cascade_condition(&model),
            "boundary_tie": (model.l + model.h - 1.0).abs() < 1e-12,
            "comparison": comparison,
        }),
    )
}

fn load_mechanism(path: &Path) -> Result<MonotoneThresholdMechanism> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read mechanism {}: {e}", path.display())))?;
    MonotoneThresholdMechanism::from_json(&text)
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<()> {
    let path = cfg.mechanism.as_ref().ok_or_else(|| Error::Config("verify needs --mechanism".into()))?;
    let mech = load_mechanism(path)?;
    let engine = Engine::new(mech.distribution.build(path.parent())?, cfg.grid_spec())?;
    let report = full_report(&mech, &engine, cfg)?;
    write_json(&cfg.output_dir.join("verification.json"), &report)?;
    write_summary(
        cfg,
        "verify",
        json!({
            "mechanism": path,
            "n": mech.n,
            "designer_value": designer_value(&mech, &engine)?,
            "passed": report.passed,
            "ic_min_margin": report.ic_min_margin,
        }),
    )
}

pub fn cmd_export_menu(cfg: &RunConfig) -> Result<()> {
    let mech = match &cfg.mechanism {
        Some(path) => load_mechanism(path)?,
        None => optimal_mechanism(&cfg.engine()?, cfg.n, cfg.grid_k)?.mechanism,
    };
    let menu = export_persuasion_menu(&mech)?;
    write_json(&cfg.output_dir.join("menu.json"), &menu)?;
    write_summary(
        cfg,
        "export-menu",
        json!({
            "entries": menu.entries.len(),
            "deterministic": menu.deterministic,
            "monotone_partitional": menu.monotone_partitional,
        }),
    )
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(cli);
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    match &cli.command {
        Command::Solve => cmd_solve(&cfg),
        Command::SweepN => cmd_sweep_n(&cfg),
        Command::Simulate => cmd_simulate(&cfg),
        Command::Verify { .. } => cmd_verify(&cfg),
        Command::ExportMenu { .. } => cmd_export_menu(&cfg),
    }
}

/// Machine-readable description of a failure.
pub fn error_json(e: &Error) -> Value {
    json!({ "error": e.kind(), "message": e.to_string(), "exit_code": e.exit_code() })
}

/// Entry point for the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let body = error_json(&e);
            eprintln!("{body}");
            if let Some(out) = &cli.out {
                if fs::create_dir_all(out).is_ok() {
                    let _ = write_json(&out.join("error.json"), &body);
                }
            }
            e.exit_code()
        }
    }
}
