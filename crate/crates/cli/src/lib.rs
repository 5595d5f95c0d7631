//! Command-line front end: estimation, tests, forecasts and the full
//! reproduction bundle for a dataset config.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use phillips_lf::bem::{self, BreakModel, Objective, SearchSpec};
use phillips_lf::ingest::{self, DatasetConfig, Registry};
use phillips_lf::stattests::DeterministicSpec;

pub mod commands;
pub mod output;
pub mod report;
pub mod repro;
pub mod svg;
pub mod tables;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad invocation: exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Any failure while running: exit code 1.
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

pub const DEFAULT_SEED: u64 = 20_130_601;

#[derive(Debug, Parser)]
#[command(
    name = "phillips-lf",
    version,
    about = "Lagged labour-force inflation models on cumulative curves"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Master seed for every random draw.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "phillips-lf-out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a break model and write its record, residuals and plots.
    Estimate(EstimateArgs),
    /// Run a unit-root or cointegration test.
    Test(TestArgs),
    /// Forecast beyond the fit window, optionally with the error-correction model.
    Forecast(ForecastArgs),
    /// Write every table, figure and the reference comparison.
    Report(ReportArgs),
}

/// Inclusive year or lag range written `A:B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Range(pub i32, pub i32);

fn parse_range(s: &str) -> Result<Range, String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected A:B, got `{s}`"))?;
    let a: i32 = a.trim().parse().map_err(|_| format!("bad number `{a}`"))?;
    let b: i32 = b.trim().parse().map_err(|_| format!("bad number `{b}`"))?;
    if a > b {
        return Err(format!("empty range {a}:{b}"));
    }
    Ok(Range(a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Cumulative,
    Annual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestKind {
    Adf,
    Pp,
    Cadf,
    Johansen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DetArg {
    None,
    Constant,
    Trend,
}

impl From<DetArg> for DeterministicSpec {
    fn from(d: DetArg) -> Self {
        match d {
            DetArg::None => DeterministicSpec::None,
            DetArg::Constant => DeterministicSpec::Constant,
            DetArg::Trend => DeterministicSpec::ConstantAndTrend,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct FitOverrides {
    /// Replace the first predictor's series.
    #[arg(long)]
    pub predictor: Option<String>,
    /// Centred moving-average window for the first predictor.
    #[arg(long)]
    pub smooth: Option<usize>,
    /// Lag search range, e.g. 0:10.
    #[arg(long, value_parser = parse_range)]
    pub lag_grid: Option<Range>,
    /// Break-year search range, e.g. 1986:2003.
    #[arg(long, value_parser = parse_range)]
    pub break_grid: Option<Range>,
    #[arg(long, value_enum)]
    pub objective: Option<ObjectiveArg>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    pub config: PathBuf,
    pub model: String,
    #[command(flatten)]
    pub fit: FitOverrides,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    pub config: PathBuf,
    /// Series to test (adf, pp).
    #[arg(long, conflicts_with = "model")]
    pub series: Option<String>,
    /// Model whose measured and predicted cumulative curves are tested (cadf, johansen).
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, value_enum)]
    pub test: TestKind,
    /// Augmentation search limit (adf, cadf) or VAR order (johansen).
    #[arg(long, default_value_t = 4)]
    pub max_lag: usize,
    /// Deterministic terms; constant for adf/pp, none for johansen by default.
    #[arg(long, value_enum)]
    pub det: Option<DetArg>,
    /// Test the first difference of the series.
    #[arg(long)]
    pub diff: bool,
    /// Restrict the series to A:B.
    #[arg(long, value_parser = parse_range)]
    pub window: Option<Range>,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    pub config: PathBuf,
    pub model: String,
    #[arg(long)]
    pub horizon: usize,
    /// Add the error-correction forecast.
    #[arg(long)]
    pub vecm: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub config: PathBuf,
    /// Monte Carlo replications for the calibration table.
    #[arg(long, default_value_t = 1000)]
    pub mc_reps: usize,
}

/// A loaded config and its prepared series.
pub struct Context {
    pub config_path: PathBuf,
    pub config_bytes: Vec<u8>,
    pub config: DatasetConfig,
    pub registry: Registry,
}

impl Context {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let config_bytes =
            std::fs::read(path).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
        let config = DatasetConfig::load(path)
            .map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
        if config.series.is_empty() {
            return Err(CliError::Run(format!(
                "{}: config defines no series",
                path.display()
            )));
        }
        let registry = ingest::load_dataset(&config).map_err(|e| CliError::Run(e.to_string()))?;
        Ok(Self {
            config_path: path.to_path_buf(),
            config_bytes,
            config,
            registry,
        })
    }

    pub fn base_search(&self) -> SearchSpec {
        SearchSpec {
            break_grid: (
                self.config.break_window.first_year,
                self.config.break_window.last_year,
            ),
            ..SearchSpec::default()
        }
    }

    pub fn model_config(&self, name: &str) -> Result<&bem::ModelConfig, CliError> {
        self.config.models.get(name).ok_or_else(|| {
            let known: Vec<&str> = self.config.models.keys().map(String::as_str).collect();
            CliError::Usage(format!(
                "unknown model `{name}`; known models: {}",
                known.join(", ")
            ))
        })
    }

    /// Fits a configured model with optional command-line overrides.
    pub fn fit(&self, name: &str, o: &FitOverrides) -> Result<BreakModel, CliError> {
        let m = self.model_config(name)?;
        let mut form = m.form();
        let mut search = m.search(&self.base_search());
        if let Some(p) = &o.predictor {
            if self.registry.get(p).is_none() {
                return Err(CliError::Usage(format!("unknown series `{p}`")));
            }
            form.predictors[0].series = p.clone();
        }
        if let Some(w) = o.smooth {
            if w == 0 || w % 2 == 0 {
                return Err(CliError::Usage(format!("--smooth {w}: window must be odd")));
            }
            form.predictors[0].smooth = w;
        }
        if let Some(Range(a, b)) = o.lag_grid {
            search.lag_grid = (a, b);
        }
        if let Some(Range(a, b)) = o.break_grid {
            search.break_grid = (a, b);
        }
        if let Some(obj) = o.objective {
            search.objective = match obj {
                ObjectiveArg::Cumulative => Objective::CumulativeSse,
                ObjectiveArg::Annual => Objective::AnnualSse,
            };
        }
        bem::fit_break_model(&form, &self.registry, self.config.model_window, &search)
            .map_err(|e| CliError::Run(format!("model `{name}`: {e}")))
    }

    pub fn manifest(&self, command: &[String], seed: u64) -> output::RunManifest {
        let series = self
            .registry
            .records()
            .map(|r| {
                (
                    r.name.clone(),
                    output::SeriesHash {
                        source: r.source.clone(),
                        raw_sha256: ingest::fingerprint(&[&r.raw]),
                        prepared_sha256: ingest::fingerprint(&[&r.prepared]),
                    },
                )
            })
            .collect();
        output::RunManifest {
            tool: "phillips-lf".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.to_vec(),
            config_path: self.config_path.display().to_string(),
            config_sha256: output::sha256_hex(&self.config_bytes),
            series,
            seed,
            timestamp_unix: output::timestamp(),
            outputs: Vec::new(),
        }
    }
}

/// Runs a parsed command. `argv` is recorded in the manifest.
pub fn run(cli: &Cli, argv: &[String]) -> Result<PathBuf, CliError> {
    match &cli.command {
        Command::Estimate(a) => commands::estimate(a, &cli.out, cli.seed, argv),
        Command::Test(a) => commands::test(a, &cli.out, cli.seed, argv),
        Command::Forecast(a) => commands::forecast(a, &cli.out, cli.seed, argv),
        Command::Report(a) => report::report(a, &cli.out, cli.seed, argv),
    }
}
