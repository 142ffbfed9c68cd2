//! Run configuration: command-line flags layered over an optional
//! `key = value` config file, then the environment, then defaults.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use ibmdp::dataset::{toy_task, Dataset, LabelColumn};
use ibmdp::experiments::{
    parse_zeta_grid, SolverSpec, StepSize, DEFAULT_DATA_DEPTH, DEFAULT_GAMMA, DEFAULT_ITERATIONS, DEFAULT_P,
    DEFAULT_TOLERANCE, DEFAULT_TOY_DEPTH, DEFAULT_ZETA,
};
use ibmdp::ibmdp::IbmdpConfig;
use ibmdp::solvers::SolverKind;
use ibmdp::trees::{SplitCriterion, ThresholdMode};
use ibmdp::{Error, Result};

pub const OUT_ENV: &str = "IBMDP_OUT";
pub const DEFAULT_OUT: &str = "ibmdp-out";
pub const DEFAULT_SEEDS: usize = 10;

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Delimited text file with a header row.
    #[arg(long, value_name = "PATH", conflicts_with = "toy")]
    pub data: Option<PathBuf>,
    /// Built-in toy task index (0-6).
    #[arg(long, value_name = "N")]
    pub toy: Option<usize>,
    /// Label column, by name or zero-based index (default: last column).
    #[arg(long, value_name = "COL")]
    pub label: Option<String>,
    /// Reward of every information-gathering action.
    #[arg(long, allow_negative_numbers = true)]
    pub zeta: Option<f64>,
    /// Sweep grid `a:b:step`.
    #[arg(long = "zeta-grid", value_name = "A:B:STEP", allow_hyphen_values = true)]
    pub zeta_grid: Option<String>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Split granularity: thresholds at h/(p+1) of the current interval.
    #[arg(short = 'p')]
    pub p: Option<u32>,
    /// Maximum consecutive tests (2 for toy tasks, 3 for files by default).
    #[arg(short = 'M')]
    pub max_igas: Option<u32>,
    /// vi, erpi, pg or greedy.
    #[arg(long)]
    pub solver: Option<String>,
    /// Iterations of ERPI / policy gradient.
    #[arg(short = 'K')]
    pub iterations: Option<usize>,
    /// Step size, or `theorem1` for the bound-optimal ERPI step.
    #[arg(long)]
    pub alpha: Option<String>,
    /// Bellman residual tolerance for value iteration.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Standard deviation of Gaussian noise added to advantages.
    #[arg(long = "noise-sigma")]
    pub noise_sigma: Option<f64>,
    /// Number of noisy runs per toy task.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Base random seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Greedy candidate thresholds: ibmdp_grid or data_values.
    #[arg(long = "threshold-mode")]
    pub threshold_mode: Option<String>,
    /// Greedy split criterion: gini or error_rate.
    #[arg(long)]
    pub criterion: Option<String>,
    /// Output directory [env: IBMDP_OUT] (default: ibmdp-out).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// `key = value` config file; command-line flags take precedence.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Include wall-clock times in the outputs (makes them non-reproducible).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    data: Option<PathBuf>,
    toy: Option<usize>,
    label: Option<String>,
    zeta: Option<f64>,
    zeta_grid: Option<String>,
    gamma: Option<f64>,
    p: Option<u32>,
    #[serde(alias = "M")]
    max_igas: Option<u32>,
    solver: Option<String>,
    #[serde(alias = "K")]
    iterations: Option<usize>,
    alpha: Option<AlphaValue>,
    tol: Option<f64>,
    noise_sigma: Option<f64>,
    seeds: Option<usize>,
    seed: Option<u64>,
    threshold_mode: Option<String>,
    criterion: Option<String>,
    out: Option<PathBuf>,
    timing: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum AlphaValue {
    Number(f64),
    Text(String),
}

impl AlphaValue {
    fn into_text(self) -> String {
        match self {
            AlphaValue::Number(x) => x.to_string(),
            AlphaValue::Text(s) => s,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Source {
    File { path: PathBuf, label: LabelColumn },
    Toy(usize),
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub source: Source,
    pub zeta: f64,
    pub zeta_grid: Option<Vec<f64>>,
    pub gamma: f64,
    pub p: u32,
    pub max_igas: u32,
    pub spec: SolverSpec,
    pub seeds: usize,
    pub out: PathBuf,
    pub timing: bool,
}

fn pick<T>(cli: Option<T>, file: Option<T>) -> Option<T> {
    cli.or(file)
}

fn parse_threshold_mode(s: &str, p: u32) -> Result<ThresholdMode> {
    match s.to_ascii_lowercase().replace('-', "_").as_str() {
        "ibmdp_grid" | "grid" => Ok(ThresholdMode::IbmdpGrid { p }),
        "data_values" | "data" => Ok(ThresholdMode::DataValues),
        other => Err(Error::InvalidConfig(format!("unknown threshold mode '{other}'"))),
    }
}

fn parse_criterion(s: &str) -> Result<SplitCriterion> {
    match s.to_ascii_lowercase().replace('-', "_").as_str() {
        "gini" => Ok(SplitCriterion::Gini),
        "error_rate" | "error" => Ok(SplitCriterion::ErrorRate),
        other => Err(Error::InvalidConfig(format!("unknown criterion '{other}'"))),
    }
}

fn parse_alpha(s: &str) -> Result<StepSize> {
    if s.eq_ignore_ascii_case("theorem1") {
        return Ok(StepSize::Theorem1);
    }
    match s.parse::<f64>() {
        Ok(a) if a > 0.0 && a.is_finite() => Ok(StepSize::Fixed(a)),
        _ => Err(Error::InvalidConfig(format!(
            "alpha must be a positive number or 'theorem1', got '{s}'"
        ))),
    }
}

fn read_file_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

impl RunConfig {
    /// Resolves flags, config file and environment. `require_source` is false
    /// for commands that fall back to the toy suite.
    pub fn resolve(args: &RunArgs, require_source: bool) -> Result<RunConfig> {
        let file = match &args.config {
            Some(path) => read_file_config(path)?,
            None => FileConfig::default(),
        };
        let data = pick(args.data.clone(), file.data);
        let toy = pick(args.toy, file.toy);
        let source = match (data, toy) {
            (Some(_), Some(_)) => return Err(Error::InvalidConfig("use either --data or --toy, not both".into())),
            (Some(path), None) => {
                let label = pick(args.label.clone(), file.label)
                    .map(|l| LabelColumn::parse(&l))
                    .unwrap_or(LabelColumn::Last);
                Source::File { path, label }
            }
            (None, Some(i)) => Source::Toy(i),
            (None, None) if require_source => {
                return Err(Error::InvalidConfig(
                    "a dataset is required: --data PATH or --toy N".into(),
                ))
            }
            (None, None) => Source::Toy(0),
        };
        let p = pick(args.p, file.p).unwrap_or(DEFAULT_P);
        let default_depth = match source {
            Source::Toy(_) => DEFAULT_TOY_DEPTH,
            Source::File { .. } => DEFAULT_DATA_DEPTH,
        };
        let kind: SolverKind = pick(args.solver.clone(), file.solver)
            .map(|s| s.parse())
            .transpose()?
            .unwrap_or(SolverKind::ValueIteration);
        let mut spec = SolverSpec::new(kind);
        spec.iterations = pick(args.iterations, file.iterations).unwrap_or(DEFAULT_ITERATIONS);
        if spec.iterations == 0 {
            return Err(Error::InvalidConfig("-K must be at least 1".into()));
        }
        if let Some(alpha) = pick(args.alpha.clone(), file.alpha.map(AlphaValue::into_text)) {
            spec.step_size = parse_alpha(&alpha)?;
        }
        spec.tolerance = pick(args.tol, file.tol).unwrap_or(DEFAULT_TOLERANCE);
        if !(spec.tolerance > 0.0) {
            return Err(Error::InvalidConfig("--tol must be positive".into()));
        }
        spec.noise_sigma = pick(args.noise_sigma, file.noise_sigma).unwrap_or(0.0);
        if !(spec.noise_sigma >= 0.0) || !spec.noise_sigma.is_finite() {
            return Err(Error::InvalidConfig(
                "--noise-sigma must be a non-negative number".into(),
            ));
        }
        spec.seed = pick(args.seed, file.seed).unwrap_or(0);
        spec.threshold_mode = pick(args.threshold_mode.clone(), file.threshold_mode)
            .map(|m| parse_threshold_mode(&m, p))
            .transpose()?;
        if let Some(c) = pick(args.criterion.clone(), file.criterion) {
            spec.criterion = parse_criterion(&c)?;
        }
        let zeta_grid = pick(args.zeta_grid.clone(), file.zeta_grid)
            .map(|g| parse_zeta_grid(&g))
            .transpose()?;
        let out = pick(args.out.clone(), file.out)
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        let seeds = pick(args.seeds, file.seeds).unwrap_or(DEFAULT_SEEDS);
        if seeds == 0 {
            return Err(Error::InvalidConfig("--seeds must be at least 1".into()));
        }
        Ok(RunConfig {
            source,
            zeta: pick(args.zeta, file.zeta).unwrap_or(DEFAULT_ZETA),
            zeta_grid,
            gamma: pick(args.gamma, file.gamma).unwrap_or(DEFAULT_GAMMA),
            p,
            max_igas: pick(args.max_igas, file.max_igas).unwrap_or(default_depth),
            spec,
            seeds,
            out,
            timing: args.timing || file.timing.unwrap_or(false),
        })
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match &self.source {
            Source::File { path, label } => Dataset::load(path, label),
            Source::Toy(i) => toy_task(*i),
        }
    }

    pub fn ibmdp_config(&self, dataset: &Dataset) -> Result<IbmdpConfig> {
        IbmdpConfig::new(dataset, self.zeta, self.gamma, self.p, self.max_igas)
    }
}
