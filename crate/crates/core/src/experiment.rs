//! Config-driven rate experiments.
//!
//! A TOML file declares one sweep; [`run_experiment`] executes it and writes
//! `points.csv`, `points.json`, `ratefit.json`, `plotdata.csv` and
//! `summary.txt` into the output directory. Everything except `summary.txt`
//! is a pure function of the resolved config.
//!
//! ```toml
//! model = "ou-linear"
//! estimator = "weak-semigroup"
//! functional = "second-moment"
//! horizon = 1.0
//! seed = 7
//! replications = "adaptive"   # or a count
//! budget = 65536
//!
//! [sweep]
//! axis = "h"                   # or "N"
//! values = [8, 16, 32, 64, 128]
//! fixed = 16384                # N for an h-sweep, n for an N-sweep
//!
//! [verdict]
//! lower = 0.7
//! upper = 1.3
//! ```

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    fit_rate, run_sweep, write_points_csv, Axis, ErrorPoint, EstimatorKind, RateFit, ReferenceMode, Replications,
    SweepAxis, SweepOutcome, SweepPlan, SweepStatus, TimeSelection,
};
use crate::error::{Error, Result};
use crate::measures::Functional;
use crate::particles::SnapshotSchedule;
use crate::reference::{catalog_entry, ModelParams};

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "MCKEAN_OUT_DIR";

pub const VERSION: &str = concat!("mckean ", env!("CARGO_PKG_VERSION"));

const DEFAULT_OUT_ROOT: &str = "mckean-out";
const DEFAULT_INITIAL_REPLICATIONS: usize = 16;
const DEFAULT_BUDGET: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: String,
    estimator: String,
    functional: Option<String>,
    horizon: Option<f64>,
    dim: Option<usize>,
    seed: u64,
    output: Option<PathBuf>,
    reference: Option<String>,
    time: Option<RawTime>,
    replications: RawReplications,
    initial_replications: Option<usize>,
    budget: Option<usize>,
    dump_replication: Option<u64>,
    sweep: RawSweep,
    #[serde(default)]
    params: ModelParams,
    verdict: Option<Window>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum RawTime {
    Named(String),
    At(f64),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum RawReplications {
    Count(usize),
    Mode(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    axis: String,
    values: Vec<usize>,
    fixed: usize,
    finest: Option<usize>,
}

/// Acceptance window for the fitted slope; a missing side is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl Window {
    pub fn contains(&self, slope: f64) -> bool {
        self.lower.is_none_or(|l| slope >= l) && self.upper.is_none_or(|u| slope <= u)
    }

    fn describe(&self) -> String {
        let side = |v: Option<f64>, inf: &str| v.map_or(inf.to_string(), |x| format!("{x}"));
        format!("[{}, {}]", side(self.lower, "-inf"), side(self.upper, "inf"))
    }
}

/// A validated config with every default made explicit.
///
/// Output directory and worker count are not part of it: they cannot change
/// any result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: String,
    pub params: ModelParams,
    pub dim: usize,
    pub estimator: EstimatorKind,
    pub functional: Option<String>,
    pub horizon: f64,
    pub axis: Axis,
    pub values: Vec<usize>,
    pub fixed: usize,
    pub finest: usize,
    /// `exact` or `fine:<factor>`.
    pub reference: String,
    /// `terminal`, `schedule` or `t=<value>`.
    pub time: String,
    /// `R`, or the cap for adaptive runs.
    pub replications: usize,
    pub adaptive: bool,
    pub initial_replications: Option<usize>,
    pub seed: u64,
    pub window: Option<Window>,
    pub dump_replication: Option<u64>,
    #[serde(skip)]
    output: Option<PathBuf>,
}

fn line_of(src: &str, key: &str) -> Option<usize> {
    src.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

fn config_error(src: &str, key: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        line: line_of(src, key),
        msg: msg.into(),
    }
}

impl ExperimentConfig {
    pub fn parse(src: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(src).map_err(|e| {
            let msg = e.message().to_string();
            let unknown = msg
                .strip_prefix("unknown field `")
                .and_then(|rest| rest.split('`').next())
                .and_then(|key| line_of(src, key));
            let span_line = e.span().map(|s| src[..s.start].matches('\n').count() + 1);
            Error::Config {
                line: unknown.or(span_line),
                msg,
            }
        })?;
        let err = |key: &str, msg: String| config_error(src, key, msg);

        let estimator = EstimatorKind::parse(&raw.estimator).ok_or_else(|| {
            let known: Vec<_> = EstimatorKind::ALL.iter().map(|k| k.as_str()).collect();
            err("estimator", format!("unknown estimator {:?}; expected one of {}", raw.estimator, known.join(", ")))
        })?;
        if estimator.needs_functional() {
            let Some(id) = &raw.functional else {
                return Err(err("estimator", format!("{estimator} needs a `functional`")));
            };
            Functional::from_id(id).map_err(|e| err("functional", e.to_string()))?;
        }
        let dim = raw.dim.unwrap_or(1);
        catalog_entry(&raw.model, &raw.params, dim).map_err(|e| err("model", e.to_string()))?;
        let horizon = raw.horizon.unwrap_or(1.0);
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(err("horizon", format!("horizon {horizon} must be positive")));
        }

        let axis = match raw.sweep.axis.as_str() {
            "h" | "n" => Axis::H,
            "N" => Axis::N,
            other => return Err(err("axis", format!("unknown sweep axis {other:?}; expected \"h\" or \"N\""))),
        };
        let values = raw.sweep.values;
        if values.len() < 2 {
            return Err(err("values", "a sweep needs at least two values".into()));
        }
        if values.contains(&0) || raw.sweep.fixed == 0 {
            return Err(err("values", "sweep values and the fixed coordinate must be positive".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(err("values", "sweep values must be strictly increasing".into()));
        }
        let steps: Vec<usize> = match axis {
            Axis::H => values.clone(),
            Axis::N => vec![raw.sweep.fixed],
        };
        let finest = raw.sweep.finest.unwrap_or(*steps.iter().max().expect("nonempty"));
        if let Some(bad) = steps.iter().find(|&&n| finest % n != 0) {
            let key = if raw.sweep.finest.is_some() { "finest" } else { "values" };
            return Err(err(key, format!("n = {bad} does not divide the finest step count {finest}")));
        }

        let reference = match raw.reference.as_deref().unwrap_or("exact") {
            "exact" => "exact".to_string(),
            other => match other.strip_prefix("fine:").map(str::parse::<usize>) {
                Some(Ok(f)) if f >= 2 => format!("fine:{f}"),
                _ => return Err(err("reference", format!("reference {other:?} is not \"exact\" or \"fine:<factor >= 2>\""))),
            },
        };
        let time = match &raw.time {
            None => "terminal".to_string(),
            Some(RawTime::Named(s)) if s == "terminal" || s == "schedule" => s.clone(),
            Some(RawTime::At(t)) if (0.0..=horizon).contains(t) => format!("t={t}"),
            Some(other) => {
                return Err(err("time", format!("time {other:?} is not \"terminal\", \"schedule\" or a time in [0, T]")))
            }
        };
        let (replications, adaptive, initial_replications) = match raw.replications {
            RawReplications::Count(r) if r >= 2 => {
                if raw.budget.is_some() || raw.initial_replications.is_some() {
                    return Err(err("budget", "`budget` and `initial_replications` apply to adaptive runs only".into()));
                }
                (r, false, None)
            }
            RawReplications::Count(r) => return Err(err("replications", format!("{r} replications; at least 2 are needed"))),
            RawReplications::Mode(m) if m == "adaptive" => {
                let cap = raw.budget.unwrap_or(DEFAULT_BUDGET);
                let initial = raw.initial_replications.unwrap_or(DEFAULT_INITIAL_REPLICATIONS);
                if initial < 2 || cap < initial {
                    return Err(err("budget", format!("need 2 <= initial_replications ({initial}) <= budget ({cap})")));
                }
                (cap, true, Some(initial))
            }
            RawReplications::Mode(m) => {
                return Err(err("replications", format!("replications {m:?} is not a count or \"adaptive\"")))
            }
        };
        if let Some(w) = raw.verdict {
            if w.lower.is_none() && w.upper.is_none() {
                return Err(err("lower", "[verdict] needs `lower`, `upper` or both".into()));
            }
        }
        let config = Self {
            model: catalog_entry(&raw.model, &raw.params, dim)?.id.to_string(),
            params: raw.params.resolved(&raw.model)?,
            dim,
            estimator,
            functional: if estimator.needs_functional() { raw.functional } else { None },
            horizon,
            axis,
            values,
            fixed: raw.sweep.fixed,
            finest,
            reference,
            time,
            replications,
            adaptive,
            initial_replications,
            seed: raw.seed,
            window: raw.verdict,
            dump_replication: raw.dump_replication,
            output: raw.output,
        };
        // model/estimator compatibility
        config.plan(1, false)?.validate().map_err(|e| err("estimator", e.to_string()))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// The sweep this config describes.
    pub fn plan(&self, workers: usize, progress: bool) -> Result<SweepPlan> {
        let entry = catalog_entry(&self.model, &self.params, self.dim)?;
        let functional = match &self.functional {
            Some(id) => Some((id.clone(), Functional::from_id(id)?)),
            None => None,
        };
        let axis = match self.axis {
            Axis::H => SweepAxis::H {
                particles: self.fixed,
                steps: self.values.clone(),
            },
            Axis::N => SweepAxis::N {
                steps: self.fixed,
                particles: self.values.clone(),
            },
        };
        let reference = match self.reference.strip_prefix("fine:") {
            Some(f) => ReferenceMode::Fine(f.parse().expect("validated")),
            None => ReferenceMode::Exact,
        };
        let times = match self.time.as_str() {
            "terminal" => TimeSelection::Terminal,
            "schedule" => TimeSelection::Schedule,
            t => TimeSelection::At(t.trim_start_matches("t=").parse().expect("validated")),
        };
        let replications = if self.adaptive {
            Replications::Adaptive {
                initial: self.initial_replications.unwrap_or(DEFAULT_INITIAL_REPLICATIONS),
                cap: self.replications,
            }
        } else {
            Replications::Fixed(self.replications)
        };
        Ok(SweepPlan {
            entry,
            kind: self.estimator,
            functional,
            horizon: self.horizon,
            axis,
            finest: self.finest,
            reference,
            times,
            replications,
            seed: self.seed,
            workers,
            progress,
        })
    }
}

/// Command-line adjustments to a config run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    /// Overrides both the config's `output` and the environment default.
    pub output: Option<PathBuf>,
    /// Root for the default output directory; falls back to `$MCKEAN_OUT_DIR`.
    pub output_root: Option<PathBuf>,
    pub progress: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    Noisy,
    /// No window configured.
    None,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Pass | Self::None => 0,
            Self::Fail => 1,
            Self::Noisy => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub version: String,
    pub config: ExperimentConfig,
    pub verdict: Verdict,
    pub reason: String,
    pub window: Option<Window>,
    pub fit: Option<RateFit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub output: PathBuf,
    pub report: RateReport,
    pub outcome: SweepOutcome,
}

/// Process exit code for a library error.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => 2,
        Error::Integration { .. } => 3,
        Error::SizeCap { .. } => 5,
        _ => 1,
    }
}

fn resolve_output(config: &ExperimentConfig, options: &RunOptions, config_path: Option<&Path>) -> PathBuf {
    if let Some(out) = options.output.clone().or_else(|| config.output.clone()) {
        return out;
    }
    let root = options
        .output_root
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT));
    let stem = config_path
        .and_then(|p| p.file_stem())
        .map_or_else(|| "experiment".into(), |s| s.to_owned());
    root.join(stem)
}

fn judge(config: &ExperimentConfig, outcome: &SweepOutcome) -> (Verdict, String, Option<RateFit>) {
    if let SweepStatus::NoiseExhausted { point } = outcome.status {
        let p = &outcome.points[point];
        let reason = format!(
            "noise gate not met at N = {}, n = {} after R = {} (std_error/estimate = {:.3}); later points not run",
            p.particles,
            p.steps,
            p.replications,
            p.noise_ratio()
        );
        return (Verdict::Noisy, reason, None);
    }
    let fit = match fit_rate(&outcome.points, config.axis) {
        Ok(fit) => fit,
        Err(e) => {
            let verdict = if config.window.is_some() { Verdict::Fail } else { Verdict::None };
            return (verdict, format!("no rate fit: {e}"), None);
        }
    };
    let slope = format!("slope {:.4} +- {:.4}", fit.slope, fit.slope_half_width);
    let verdict = match config.window {
        None => (Verdict::None, format!("{slope}; no window configured")),
        Some(_) if !fit.clean => (
            Verdict::Noisy,
            format!("{slope}; noise ratio {:.3} above the 0.2 gate", fit.noise_ratio),
        ),
        Some(w) if w.contains(fit.slope) => (Verdict::Pass, format!("{slope} inside {}", w.describe())),
        Some(w) => (Verdict::Fail, format!("{slope} outside {}", w.describe())),
    };
    (verdict.0, verdict.1, Some(fit))
}

#[derive(Serialize)]
struct PointsDoc<'a> {
    version: &'a str,
    config: &'a ExperimentConfig,
    complete: bool,
    points: &'a [ErrorPoint],
    companions: &'a [ErrorPoint],
}

#[derive(Serialize)]
struct PlotRow<'a> {
    kind: &'a str,
    axis: &'a str,
    x: f64,
    log_x: f64,
    estimate: f64,
    log_estimate: f64,
    std_error: f64,
    fit_log_estimate: Option<f64>,
}

fn header_lines(config: &ExperimentConfig) -> Result<String> {
    Ok(format!("# {VERSION}\n# config {}\n", serde_json::to_string(config)?))
}

fn write_artifacts(dir: &Path, config: &ExperimentConfig, outcome: &SweepOutcome, report: &RateReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    let header = header_lines(config)?;
    let all: Vec<ErrorPoint> = outcome.points.iter().chain(&outcome.companions).cloned().collect();

    let mut csv_bytes = header.clone().into_bytes();
    write_points_csv(&all, &mut csv_bytes)?;
    fs::write(dir.join("points.csv"), csv_bytes)?;

    let doc = PointsDoc {
        version: VERSION,
        config,
        complete: outcome.status == SweepStatus::Complete,
        points: &outcome.points,
        companions: &outcome.companions,
    };
    fs::write(dir.join("points.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
    fs::write(dir.join("ratefit.json"), serde_json::to_string_pretty(report)? + "\n")?;

    let mut plot = header.into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut plot);
        for p in &all {
            let x = config.axis.value(p);
            let primary = p.kind == config.estimator;
            w.serialize(PlotRow {
                kind: p.kind.as_str(),
                axis: config.axis.as_str(),
                x,
                log_x: x.ln(),
                estimate: p.estimate,
                log_estimate: p.estimate.ln(),
                std_error: p.std_error,
                fit_log_estimate: report.fit.as_ref().filter(|_| primary).map(|f| f.intercept + f.slope * x.ln()),
            })?;
        }
        w.flush()?;
    }
    fs::write(dir.join("plotdata.csv"), plot)?;

    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let mut summary = fs::File::create(dir.join("summary.txt"))?;
    writeln!(summary, "{VERSION}")?;
    writeln!(summary, "finished at unix time {stamp}")?;
    writeln!(
        summary,
        "model {} | estimator {} | axis {} | seed {}",
        config.model,
        config.estimator,
        config.axis.as_str(),
        config.seed
    )?;
    for p in &outcome.points {
        writeln!(
            summary,
            "  N = {:>6}  n = {:>5}  R = {:>6}  estimate = {:.6e}  std_error = {:.3e}{}",
            p.particles,
            p.steps,
            p.replications,
            p.estimate,
            p.std_error,
            if p.usable { "" } else { "  (noisy)" }
        )?;
    }
    if let Some(w) = &report.window {
        writeln!(summary, "window {}", w.describe())?;
    }
    writeln!(summary, "verdict {:?}: {}", report.verdict, report.reason)?;
    Ok(())
}

/// Tableau and scheme trajectory of one replication at the finest design point.
fn write_dumps(dir: &Path, plan: &SweepPlan, replication: u64) -> Result<()> {
    let (particles, n) = *plan
        .axis
        .design()
        .iter()
        .max_by_key(|(p, n)| (*n, *p))
        .expect("nonempty design");
    let (initial, tableau) = plan.materialize(replication, particles)?;
    tableau.write_binary(std::io::BufWriter::new(fs::File::create(dir.join("tableau.bin"))?))?;
    let grid = crate::grid::TimeGrid::new(plan.horizon, n)?;
    let record = crate::particles::simulate(plan.entry.model.as_ref(), &initial, &grid, &tableau, &SnapshotSchedule::All)?;
    record.write_csv(std::io::BufWriter::new(fs::File::create(dir.join("trajectory.csv"))?))?;
    record.write_binary(std::io::BufWriter::new(fs::File::create(dir.join("trajectory.bin"))?))?;
    Ok(())
}

/// Runs a parsed config and writes its artifacts.
pub fn run_config(config: &ExperimentConfig, options: &RunOptions, config_path: Option<&Path>) -> Result<RunSummary> {
    let mut config = config.clone();
    if let Some(seed) = options.seed {
        config.seed = seed;
    }
    let output = resolve_output(&config, options, config_path);
    let plan = config.plan(options.workers.unwrap_or(0), options.progress)?;
    let outcome = run_sweep(&plan)?;
    let (verdict, reason, fit) = judge(&config, &outcome);
    let report = RateReport {
        version: VERSION.to_string(),
        config: config.clone(),
        verdict,
        reason,
        window: config.window,
        fit,
    };
    write_artifacts(&output, &config, &outcome, &report)?;
    if let Some(r) = config.dump_replication {
        write_dumps(&output, &plan, r)?;
    }
    Ok(RunSummary {
        output,
        report,
        outcome,
    })
}

/// Loads `path` and runs it.
pub fn run_experiment(path: &Path, options: &RunOptions) -> Result<RunSummary> {
    let config = ExperimentConfig::load(path)?;
    run_config(&config, options, Some(path))
}
