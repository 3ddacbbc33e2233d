//! Batch driver: ingest LOBSTER files (or generate synthetic days), compute
//! MLOFI samples, fit OLS/Ridge price-impact models and write reports.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical
//! failure.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mlofi::evaluation::{evaluate, fit_windows, EvaluationConfig, EvaluationError, SignificanceTable};
use mlofi::inference::{select_lambda, significance_summary, InferenceError, Method, RegressionFit};
use mlofi::lobster::{load_day, DaySlice, LobsterError};
use mlofi::sampling::{assemble_problems, replay_day, Assembly, DaySamples, RegressionProblem};
use mlofi::synth::{business_dates, generate_zi_days, write_lobster_fixture};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{parse_config, ConfigError, FileConfig, Overrides, RunConfig, Source, OUTPUT_DIR_ENV};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

pub(crate) fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn inference_error(context: String, e: &InferenceError) -> CliError {
    let msg = format!("{context}: {e}");
    match e {
        InferenceError::RankDeficient { .. } | InferenceError::NumericalFailure(_) => CliError::Numerical(msg),
        InferenceError::InvalidLambda(_) => CliError::Config(msg),
        _ => CliError::Data(msg),
    }
}

fn evaluation_error(e: EvaluationError) -> CliError {
    match &e {
        EvaluationError::Fold { source, .. }
        | EvaluationError::Window { source, .. }
        | EvaluationError::Lambda(source)
        | EvaluationError::Diagnostics(source) => inference_error("evaluation".into(), source),
        EvaluationError::TooManyLevels { .. } | EvaluationError::TooFewFolds(_) => CliError::Config(e.to_string()),
        EvaluationError::NoProblems | EvaluationError::Replay { .. } => CliError::Data(e.to_string()),
    }
}

#[derive(Debug, Parser)]
#[command(name = "mlofi", version, about = "Multi-level order-flow imbalance and price-impact fits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write per-interval MLOFI samples to samples.csv
    Compute,
    /// Fit every window and write coefficient tables
    Fit,
    /// Goodness-of-fit curves, improvement table, diagnostics and book summary
    Evaluate,
    /// Write synthetic LOBSTER message/orderbook files
    Synth,
}

#[derive(Debug, Default, Args)]
pub struct Flags {
    /// TOML configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Number of book levels M
    #[arg(long, global = true)]
    pub levels: Option<usize>,
    /// Regression window length in seconds
    #[arg(long, global = true)]
    pub window_secs: Option<u64>,
    /// Sampling interval length in seconds
    #[arg(long, global = true)]
    pub subwindow_secs: Option<u64>,
    /// Session start, HH:MM:SS
    #[arg(long, global = true)]
    pub session_start: Option<String>,
    /// Session end, HH:MM:SS
    #[arg(long, global = true)]
    pub session_end: Option<String>,
    /// Tick size in LOBSTER price units
    #[arg(long, global = true)]
    pub tick: Option<i64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    /// Regression method; repeat for several
    #[arg(long = "method", global = true, value_parser = parse_method)]
    pub methods: Vec<Method>,
    /// Fixed Ridge penalty instead of cross-validation
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Glob of LOBSTER message files; repeat for several
    #[arg(long = "messages", global = true)]
    pub messages: Vec<String>,
    /// Number of synthetic days
    #[arg(long, global = true)]
    pub synth_days: Option<usize>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    match s.to_ascii_lowercase().as_str() {
        "ols" => Ok(Method::Ols),
        "ridge" => Ok(Method::Ridge),
        other => Err(format!("unknown method {other:?} (expected ols or ridge)")),
    }
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            levels: self.levels,
            methods: self.methods.clone(),
            folds: self.folds,
            output_dir: self.output_dir.clone(),
            session_start: self.session_start.clone(),
            session_end: self.session_end.clone(),
            tick: self.tick,
            window_secs: self.window_secs,
            subwindow_secs: self.subwindow_secs,
            lambda: self.lambda,
            messages: self.messages.clone(),
            synth_days: self.synth_days,
        }
    }

    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                parse_config(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        let env = std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
        Ok(RunConfig::resolve(file, &self.overrides(), env)?)
    }
}

/// Days of the configured source, in date order. Message files whose session
/// holds no events are skipped.
pub fn load_days(config: &RunConfig) -> Result<Vec<DaySlice>, CliError> {
    match &config.source {
        Source::Synth(spec) => {
            let dates = business_dates(spec.first_date()?, spec.days);
            generate_zi_days(&spec.zi_params(config.seed), &config.session, &dates)
                .map_err(|e| CliError::Config(e.to_string()))
        }
        Source::Files { messages } => {
            let mut paths = Vec::new();
            for pattern in messages {
                let matches = glob::glob(pattern).map_err(|e| CliError::Config(format!("pattern {pattern:?}: {e}")))?;
                let before = paths.len();
                for entry in matches {
                    paths.push(entry.map_err(|e| CliError::Data(e.to_string()))?);
                }
                if paths.len() == before {
                    return Err(CliError::Config(format!("pattern {pattern:?} matched no files")));
                }
            }
            paths.sort();
            paths.dedup();
            let loaded = paths
                .par_iter()
                .map(|path| {
                    let book = orderbook_path(path);
                    match load_day(path, &book, config.levels, &config.session) {
                        Ok(day) => Ok(Some(day)),
                        Err(LobsterError::EmptySession) => Ok(None),
                        Err(e) => Err(CliError::Data(format!("{}: {e}", path.display()))),
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut days: Vec<DaySlice> = loaded.into_iter().flatten().collect();
            days.sort_by(|a, b| a.date.cmp(&b.date));
            Ok(days)
        }
    }
}

pub fn orderbook_path(message: &Path) -> PathBuf {
    let name = message.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    message.with_file_name(name.replacen("message", "orderbook", 1))
}

pub fn replay_days(days: &[DaySlice], config: &RunConfig) -> Result<Vec<DaySamples>, CliError> {
    days.par_iter()
        .map(|day| {
            replay_day(day, &config.session, &config.grid, config.levels).map_err(|e| CliError::Data(e.to_string()))
        })
        .collect()
}

/// Penalty used for Ridge fits at `levels`: the fixed value, or one
/// cross-validated on the pooled rows.
pub fn ridge_lambda(config: &RunConfig, pooled: &RegressionProblem) -> Result<f64, CliError> {
    match config.fixed_lambda {
        Some(l) => Ok(l),
        None => select_lambda(pooled, &config.lambda_grid, config.folds, &config.ridge)
            .map(|s| s.lambda_hat)
            .map_err(|e| inference_error("lambda selection".into(), &e)),
    }
}

#[derive(Debug, Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    command: &'static str,
    config: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

fn write_json<T: Serialize>(dir: &Path, name: &str, command: &'static str, config: &RunConfig, body: T) -> Result<PathBuf, CliError> {
    let env = Envelope {
        schema_version: SCHEMA_VERSION,
        command,
        config,
        body,
    };
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(&env).map_err(|e| io_error(&path, e))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| io_error(&path, e))?;
    Ok(path)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn problems_of(config: &RunConfig) -> Result<(Vec<DaySlice>, Assembly), CliError> {
    let days = load_days(config)?;
    let samples = replay_days(&days, config)?;
    let assembly = assemble_problems(&samples, config.levels, config.session.tick);
    if assembly.problems.is_empty() {
        return Err(CliError::Data("no regression window has enough usable intervals".into()));
    }
    Ok((days, assembly))
}

/// Files written by one command, in the order they were written.
pub type Written = Vec<PathBuf>;

pub fn cmd_compute(config: &RunConfig) -> Result<Written, CliError> {
    let days = load_days(config)?;
    let samples = replay_days(&days, config)?;
    ensure_dir(&config.output_dir)?;
    let path = config.output_dir.join("samples.csv");
    output::write_samples(&path, &samples, config.levels, config.session.tick)?;
    let discarded: usize = samples.iter().map(DaySamples::discarded).sum();
    if discarded > 0 {
        eprintln!("{discarded} one-sided intervals discarded");
    }
    Ok(vec![path])
}

#[derive(Debug, Serialize)]
struct FitBody<'a> {
    windows: usize,
    discarded_intervals: usize,
    dropped_windows: &'a [(String, usize)],
    tables: &'a [SignificanceTable],
}

pub fn cmd_fit(config: &RunConfig) -> Result<Written, CliError> {
    let (_, assembly) = problems_of(config)?;
    let problems = &assembly.problems;
    let m = config.levels;
    let pooled = RegressionProblem::pooled(problems);
    ensure_dir(&config.output_dir)?;
    let mut written = Vec::new();
    let mut tables = Vec::new();
    for &method in &config.methods {
        let lambda = match method {
            Method::Ols => 0.0,
            Method::Ridge => ridge_lambda(config, &pooled)?,
        };
        let fits: Vec<RegressionFit> =
            fit_windows(problems, method, m, lambda, &config.ridge).map_err(evaluation_error)?;
        let table = SignificanceTable {
            method,
            levels: m,
            lambda,
            windows: fits.len(),
            coefficients: significance_summary(&fits).map_err(|e| inference_error("fit".into(), &e))?,
        };
        let path = config.output_dir.join(format!("fit_{}.csv", method.name()));
        output::write_significance(&path, &table)?;
        written.push(path);
        let path = config.output_dir.join(format!("fits_{}.csv", method.name()));
        output::write_window_fits(&path, problems, &fits)?;
        written.push(path);
        tables.push(table);
    }
    let body = FitBody {
        windows: problems.len(),
        discarded_intervals: assembly.discarded_intervals,
        dropped_windows: &assembly.dropped_windows,
        tables: &tables,
    };
    written.push(write_json(&config.output_dir, "fit.json", "fit", config, body)?);
    Ok(written)
}

pub fn cmd_evaluate(config: &RunConfig) -> Result<Written, CliError> {
    let (days, assembly) = problems_of(config)?;
    let eval_config = EvaluationConfig {
        max_levels: config.levels,
        folds: config.folds,
        lambda_grid: config.lambda_grid,
        ridge: config.ridge,
        fixed_lambda: config.fixed_lambda,
    };
    let report = evaluate(&assembly.problems, Some((&days, &config.session)), &eval_config).map_err(evaluation_error)?;
    ensure_dir(&config.output_dir)?;
    let mut written = output::write_report_tables(&config.output_dir, &report)?;
    written.push(write_json(&config.output_dir, "report.json", "evaluate", config, &report)?);
    Ok(written)
}

pub fn cmd_synth(config: &RunConfig) -> Result<Written, CliError> {
    if !matches!(config.source, Source::Synth(_)) {
        return Err(CliError::Config("synth needs a [synth] section or --synth-days".into()));
    }
    let days = load_days(config)?;
    ensure_dir(&config.output_dir)?;
    let mut written = Vec::new();
    for day in &days {
        let (msg, book) = write_lobster_fixture(&config.output_dir, "SYN", day, &config.session, config.levels)
            .map_err(|e| io_error(&config.output_dir, e))?;
        written.push(msg);
        written.push(book);
    }
    Ok(written)
}

pub fn run(command: Command, config: &RunConfig) -> Result<Written, CliError> {
    match command {
        Command::Compute => cmd_compute(config),
        Command::Fit => cmd_fit(config),
        Command::Evaluate => cmd_evaluate(config),
        Command::Synth => cmd_synth(config),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = cli.flags.resolve().and_then(|config| run(cli.command, &config));
    match result {
        Ok(written) => {
            for path in written {
                println!("{}", path.display());
            }
            0
        }
        Err(e) => {
            eprintln!("mlofi: {e}");
            e.exit_code()
        }
    }
}
