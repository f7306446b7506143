//! The `lyapmetric` command line.
//!
//! One JSON config file describes the system, grid, measure and the
//! parameters of each stage; flags override the seed, thread count and
//! output location. Exit status is 0 on success, 1 on a numerical failure or
//! a failing property and 2 on a configuration or input error.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dynamics::{invariant_weights, Grid, MeasureMode, MeasureWeights, SystemKind, TorusSystem};
use crate::error::Error;
use crate::field::{read_metric_json, write_metric_json};
use crate::field::{flat_metric, MetricField};
use crate::numfmt::{json_array, json_number};
use crate::objective::evaluate_objective;
use crate::optimizer::{descend, DescentStatus, OptimizerConfig};
use crate::oracle::{lyapunov_vector, LyapunovEstimate, OracleParams};
use crate::tolerance::ToleranceProfile;
use crate::verify::{self, Suite, VerifySettings};

/// Grid section of a run config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n: 16 }
    }
}

/// Output file names used by `optimize`, relative to `--out` when given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub metric: PathBuf,
    pub trace: PathBuf,
    pub summary: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { metric: "metric.json".into(), trace: "trace.csv".into(), summary: "summary.json".into() }
    }
}

/// `bochi` section: the `N` schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BochiConfig {
    pub schedule: Vec<usize>,
}

impl Default for BochiConfig {
    fn default() -> Self {
        Self { schedule: vec![1, 2, 4, 8, 16] }
    }
}

fn default_measure() -> MeasureMode {
    MeasureMode::Lebesgue
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemKind,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_measure")]
    pub measure: MeasureMode,
    /// Seed for every random stage; `--seed` overrides it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub oracle: OracleParams,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    /// Starting field for `optimize`; the flat metric when absent.
    #[serde(default)]
    pub initial_metric: Option<PathBuf>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub tolerances: ToleranceProfile,
    #[serde(default)]
    pub verify: VerifySettings,
    #[serde(default)]
    pub bochi: BochiConfig,
}

impl RunConfig {
    /// Parses and validates a config; errors name the offending key.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("config key `{path}`: {}", e.inner()))
        })?;
        cfg.optimizer.min_step = cfg.tolerances.min_step;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |key: &str, why: &str| Err(CliError::Config(format!("config key `{key}`: {why}")));
        if self.grid.n < 2 {
            return bad("grid.n", "must be at least 2");
        }
        if self.oracle.n_steps == 0 {
            return bad("oracle.n_steps", "must be positive");
        }
        if self.oracle.samples == 0 {
            return bad("oracle.samples", "must be positive");
        }
        if let Some(name) = self.tolerances.first_invalid() {
            return bad(&format!("tolerances.{name}"), "must be positive");
        }
        if let Some(name) = self.optimizer.first_invalid() {
            return bad(&format!("optimizer.{name}"), "out of range");
        }
        if self.bochi.schedule.is_empty() || self.bochi.schedule.contains(&0) {
            return bad("bochi.schedule", "must be a nonempty list of positive integers");
        }
        if self.verify.n < 2 {
            return bad("verify.n", "must be at least 2");
        }
        Ok(())
    }

    /// Replaces every seed with `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn oracle_params(&self) -> OracleParams {
        OracleParams { seed: self.seed, ..self.oracle }
    }
}

/// Failure of a command, mapped to an exit status.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad config, missing file, grid mismatch or a metric outside `M_omega`: exit 2.
    Config(String),
    /// A numerical routine failed: exit 1.
    Numerical(String),
    /// The command ran but a property failed or descent stalled: exit 1.
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Failed(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numerical(m) | CliError::Failed(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::GridMismatch(_)
            | Error::NotInMetricSpace { .. }
            | Error::Parse(_)
            | Error::InvalidArgument(_)
            | Error::DimensionMismatch { .. }
            | Error::VolumeNotPreserved { .. } => CliError::Config(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lyapmetric", version, about = "Adapted metrics and Lyapunov exponents of torus maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file, or output directory for `optimize`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Caps the number of worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Runs a single property suite (`verify` only).
    #[arg(long, global = true)]
    pub suite: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Lyapunov vector by the QR method, as JSON.
    Oracle,
    /// Objective of a metric file, as JSON (or CSV with --csv).
    Evaluate {
        /// Metric field JSON.
        metric: PathBuf,
        #[arg(long)]
        csv: bool,
    },
    /// Geodesic descent from the flat metric or `initial_metric`.
    Optimize,
    /// Property suites with a pass/fail table.
    Verify,
    /// Bochi's averaged metrics over the configured N schedule, as CSV.
    Bochi,
}

/// Parses `args` and runs the command. Returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let mut cfg = RunConfig::from_path(path)?;
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    match &cli.command {
        Command::Oracle => cmd_oracle(&cfg, cli.out.as_deref()),
        Command::Evaluate { metric, csv } => cmd_evaluate(&cfg, metric, *csv, cli.out.as_deref()),
        Command::Optimize => cmd_optimize(&cfg, cli.out.as_deref()),
        Command::Verify => cmd_verify(&cfg, cli.suite.as_deref(), cli.out.as_deref()),
        Command::Bochi => cmd_bochi(&cfg, cli.out.as_deref()),
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::Config(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

/// System, grid and measure weights described by `cfg`.
pub fn setup(cfg: &RunConfig) -> Result<(TorusSystem, Grid, MeasureWeights), CliError> {
    let sys = TorusSystem::from_kind(cfg.system.clone()).map_err(|e| CliError::Config(format!("config key `system`: {e}")))?;
    let grid = Grid::for_system(&sys, cfg.grid.n).map_err(|e| CliError::Config(format!("config key `grid.n`: {e}")))?;
    let weights = invariant_weights(&sys, &grid, cfg.measure, cfg.seed)?;
    Ok((sys, grid, weights))
}

fn estimate_json(est: &LyapunovEstimate) -> String {
    format!(
        "{{\n  \"lambda\": {},\n  \"n_steps\": {},\n  \"per_point_spread\": {}\n}}\n",
        json_array(est.lambda.as_slice()),
        est.n_steps,
        json_number(est.per_point_spread)
    )
}

/// `oracle`: the QR Lyapunov vector as JSON.
pub fn cmd_oracle(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let (sys, _, weights) = setup(cfg)?;
    let est = lyapunov_vector(&sys, &weights, &cfg.oracle_params())?;
    emit(&estimate_json(&est), out)
}

fn load_metric(path: &Path, grid: &Grid) -> Result<MetricField, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read metric {}: {e}", path.display())))?;
    Ok(read_metric_json(&text)?.into_field(Some(grid))?)
}

/// `evaluate`: objective of a metric file with gaps to the oracle.
pub fn cmd_evaluate(cfg: &RunConfig, metric: &Path, csv: bool, out: Option<&Path>) -> Result<(), CliError> {
    let (sys, grid, weights) = setup(cfg)?;
    let g = load_metric(metric, &grid)?;
    let oracle = lyapunov_vector(&sys, &weights, &cfg.oracle_params())?;
    let report = evaluate_objective(&sys, &g, &weights, Some(&oracle))?;
    emit(&if csv { report.to_csv() } else { report.to_json() }, out)
}

fn status_name(s: DescentStatus) -> &'static str {
    match s {
        DescentStatus::Converged => "converged",
        DescentStatus::MaxIters => "max_iters",
        DescentStatus::LineSearchStall => "line_search_stall",
    }
}

/// `optimize`: descent, writing the final metric, the trace CSV and a summary JSON.
pub fn cmd_optimize(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let (sys, grid, weights) = setup(cfg)?;
    let g0 = match &cfg.initial_metric {
        Some(p) => load_metric(p, &grid)?,
        None => flat_metric(&grid),
    };
    let oracle = lyapunov_vector(&sys, &weights, &cfg.oracle_params())?;
    let opt = OptimizerConfig { seed: cfg.seed, ..cfg.optimizer.clone() };
    let result = descend(&sys, &g0, &weights, &opt, Some(&oracle))?;
    let dir = out.unwrap_or(Path::new("."));
    write_file(&dir.join(&cfg.output.metric), &write_metric_json(&result.field))?;
    write_file(&dir.join(&cfg.output.trace), &result.trace.to_csv())?;
    let gaps = result.final_report.gap_to_oracle.clone().unwrap_or_default();
    let summary = format!(
        "{{\n  \"system\": {},\n  \"status\": \"{}\",\n  \"iterations\": {},\n  \"s_partial\": {},\n  \"oracle_lambda\": {},\n  \"gap_to_oracle\": {}\n}}\n",
        serde_json::to_string(sys.description()).expect("string"),
        status_name(result.status),
        result.iterations,
        json_array(&result.final_report.s_partial),
        json_array(oracle.lambda.as_slice()),
        json_array(&gaps),
    );
    write_file(&dir.join(&cfg.output.summary), &summary)?;
    print!("{summary}");
    if result.status == DescentStatus::LineSearchStall {
        return Err(CliError::Failed(format!("line search stalled after {} iterations; outputs written", result.iterations)));
    }
    Ok(())
}

/// `verify`: property suites, all or the one named by `--suite`.
pub fn cmd_verify(cfg: &RunConfig, suite: Option<&str>, out: Option<&Path>) -> Result<(), CliError> {
    let (sys, _, _) = setup(cfg)?;
    let suites: Vec<Suite> = match suite {
        Some(name) => vec![name.parse().map_err(|e: Error| CliError::Config(e.to_string()))?],
        None => Suite::ALL.to_vec(),
    };
    let settings = VerifySettings {
        seed: cfg.seed,
        oracle: cfg.oracle_params(),
        tolerances: cfg.tolerances,
        bochi_schedule: cfg.bochi.schedule.clone(),
        ..cfg.verify.clone()
    };
    let reports = suites.iter().map(|&s| verify::run_suite(s, &sys, &settings)).collect::<Result<Vec<_>, _>>()?;
    emit(&verify::format_table(&reports), out)?;
    let failing: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.suite.name()).collect();
    if failing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("failing properties: {}", failing.join(", "))))
    }
}

/// `bochi`: gap table over the configured schedule, as CSV.
pub fn cmd_bochi(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let (sys, _, _) = setup(cfg)?;
    let rows = verify::bochi_table(&sys, cfg.grid.n, &cfg.bochi.schedule, &cfg.oracle_params())?;
    emit(&verify::bochi_csv(&rows), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = RunConfig::from_json(r#"{"system": {"kind": "standard_map", "k": 1.5}}"#).unwrap();
        assert_eq!(cfg.grid.n, 16);
        assert_eq!(cfg.measure, MeasureMode::Lebesgue);
        assert_eq!(cfg.optimizer.k_weights, vec![1.0]);
        assert_eq!(cfg.optimizer.min_step, 1e-14);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = RunConfig::from_json(r#"{"system": {"kind": "standard_map", "k": 1.5}, "optimizer": {"armijo": 0.1}}"#).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.message().contains("optimizer"), "{}", err.message());
        assert!(err.message().contains("armijo"), "{}", err.message());
        let err = RunConfig::from_json(r#"{"system": {"kind": "standard_map", "k": 1.5}, "grdi": {}}"#).unwrap_err();
        assert!(err.message().contains("grdi"), "{}", err.message());
    }

    #[test]
    fn invalid_values_are_named() {
        let err = RunConfig::from_json(r#"{"system": {"kind": "standard_map", "k": 1.5}, "optimizer": {"armijo_c": 2.0}}"#).unwrap_err();
        assert!(err.message().contains("optimizer.armijo_c"), "{}", err.message());
        let err = RunConfig::from_json(r#"{"system": {"kind": "standard_map", "k": 1.5}, "tolerances": {"volume": 0}}"#).unwrap_err();
        assert!(err.message().contains("tolerances.volume"), "{}", err.message());
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(CliError::from(Error::GridMismatch("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(Error::NoConvergence { iterations: 1, residual: 1.0 }).exit_code(), 1);
    }
}
