//! Run configuration: a TOML file, command-line overrides and the
//! `MLOFI_OUTPUT_DIR` environment variable, resolved into one [`RunConfig`].
//!
//! ```toml
//! seed = 7
//! levels = 10
//! methods = ["ols", "ridge"]
//! folds = 5
//! output_dir = "out"
//!
//! [session]
//! start = "10:00:00"
//! end = "15:30:00"
//! tick = 100
//!
//! [grid]
//! window_secs = 1800
//! subwindow_secs = 10
//!
//! [lambda]
//! min = 1e-5
//! max = 1e5
//! points = 50
//!
//! [input]
//! messages = ["data/*_message_10.csv"]
//! ```
//!
//! Exactly one of `[input]` and `[synth]` must be given.

use std::path::PathBuf;

use chrono::NaiveDate;
use mlofi::book::Timestamp;
use mlofi::inference::{LambdaGrid, Method, RidgeOptions};
use mlofi::lobster::SessionConfig;
use mlofi::sampling::{Grid, GridSpec};
use mlofi::synth::ZiParams;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const OUTPUT_DIR_ENV: &str = "MLOFI_OUTPUT_DIR";
pub const MAX_LEVELS: usize = 50;

#[derive(Debug, Error, PartialEq)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub levels: Option<usize>,
    pub methods: Option<Vec<Method>>,
    pub folds: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub penalize_intercept: Option<bool>,
    pub standardize: Option<bool>,
    pub session: Option<SessionSection>,
    pub grid: Option<GridSection>,
    pub lambda: Option<LambdaSection>,
    pub input: Option<InputSection>,
    pub synth: Option<SynthSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSection {
    pub start: Option<String>,
    pub end: Option<String>,
    pub tick: Option<i64>,
    pub exclude_hidden: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub window_secs: Option<u64>,
    pub subwindow_secs: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaSection {
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub points: Option<usize>,
    /// Skip cross-validation and use this penalty.
    pub fixed: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSection {
    /// Glob patterns of LOBSTER message files. The orderbook file is found by
    /// replacing `message` with `orderbook` in the file name.
    pub messages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub days: usize,
    pub first_date: String,
    pub limit_rate: f64,
    pub market_rate: f64,
    pub cancel_rate: f64,
    pub price_band: usize,
    pub mean_size: f64,
    pub partial_cancel_prob: f64,
    pub opening_bid: i64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let zi = ZiParams::default();
        SynthSection {
            days: 5,
            first_date: "2016-01-04".into(),
            limit_rate: zi.limit_rate,
            market_rate: zi.market_rate,
            cancel_rate: zi.cancel_rate,
            price_band: zi.price_band,
            mean_size: zi.mean_size,
            partial_cancel_prob: zi.partial_cancel_prob,
            opening_bid: zi.opening_bid,
        }
    }
}

impl SynthSection {
    pub fn zi_params(&self, seed: u64) -> ZiParams {
        ZiParams {
            limit_rate: self.limit_rate,
            market_rate: self.market_rate,
            cancel_rate: self.cancel_rate,
            price_band: self.price_band,
            mean_size: self.mean_size,
            partial_cancel_prob: self.partial_cancel_prob,
            opening_bid: self.opening_bid,
            seed,
        }
    }

    pub fn first_date(&self) -> Result<NaiveDate, ConfigError> {
        NaiveDate::parse_from_str(&self.first_date, "%Y-%m-%d")
            .map_err(|_| bad(format!("synth.first_date {:?} is not YYYY-MM-DD", self.first_date)))
    }
}

/// Settings given on the command line; `None` leaves the file value in place.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub levels: Option<usize>,
    pub methods: Vec<Method>,
    pub folds: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub session_start: Option<String>,
    pub session_end: Option<String>,
    pub tick: Option<i64>,
    pub window_secs: Option<u64>,
    pub subwindow_secs: Option<u64>,
    pub lambda: Option<f64>,
    pub messages: Vec<String>,
    pub synth_days: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Files { messages: Vec<String> },
    Synth(SynthSection),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub source: Source,
    pub session: SessionConfig,
    pub grid: GridSpec,
    pub levels: usize,
    pub methods: Vec<Method>,
    pub lambda_grid: LambdaGrid,
    pub fixed_lambda: Option<f64>,
    pub folds: usize,
    pub ridge: RidgeOptions,
    pub seed: u64,
    /// Not echoed into reports, so reruns into other directories stay identical.
    #[serde(skip)]
    pub output_dir: PathBuf,
}

pub fn parse_config(text: &str) -> Result<FileConfig, ConfigError> {
    toml::from_str(text).map_err(|e| bad(format!("config: {}", e.message())))
}

/// Parses `HH:MM:SS` into nanoseconds after midnight.
pub fn parse_clock(text: &str) -> Result<Timestamp, ConfigError> {
    let err = || bad(format!("time {text:?} is not HH:MM:SS"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 || parts.iter().any(|p| p.is_empty() || !p.bytes().all(|b| b.is_ascii_digit())) {
        return Err(err());
    }
    let nums: Vec<u64> = parts.iter().map(|p| p.parse().map_err(|_| err())).collect::<Result<_, _>>()?;
    if nums[0] > 23 || nums[1] > 59 || nums[2] > 59 {
        return Err(err());
    }
    Ok(Timestamp::from_hms(nums[0], nums[1], nums[2]))
}

impl RunConfig {
    pub fn resolve(
        file: FileConfig,
        overrides: &Overrides,
        env_output_dir: Option<PathBuf>,
    ) -> Result<RunConfig, ConfigError> {
        let session_file = file.session.unwrap_or_default();
        let defaults = SessionConfig::default();
        let clock = |flag: &Option<String>, file: &Option<String>, fallback: Timestamp| {
            flag.as_ref().or(file.as_ref()).map_or(Ok(fallback), |t| parse_clock(t))
        };
        let session = SessionConfig {
            session_start: clock(&overrides.session_start, &session_file.start, defaults.session_start)?,
            session_end: clock(&overrides.session_end, &session_file.end, defaults.session_end)?,
            tick: overrides.tick.or(session_file.tick).unwrap_or(defaults.tick),
            exclude_hidden: session_file.exclude_hidden.unwrap_or(defaults.exclude_hidden),
        };
        session.validate().map_err(|e| bad(e.to_string()))?;

        let grid_file = file.grid.unwrap_or_default();
        let grid_defaults = GridSpec::default();
        let grid = GridSpec {
            window_secs: overrides.window_secs.or(grid_file.window_secs).unwrap_or(grid_defaults.window_secs),
            subwindow_secs: overrides
                .subwindow_secs
                .or(grid_file.subwindow_secs)
                .unwrap_or(grid_defaults.subwindow_secs),
        };
        Grid::new(&session, &grid).map_err(|e| bad(e.to_string()))?;

        let levels = overrides.levels.or(file.levels).unwrap_or(10);
        if !(1..=MAX_LEVELS).contains(&levels) {
            return Err(bad(format!("levels must lie in 1..={MAX_LEVELS}, got {levels}")));
        }
        let folds = overrides.folds.or(file.folds).unwrap_or(5);
        if folds < 2 {
            return Err(bad(format!("folds must be at least 2, got {folds}")));
        }
        let mut methods = if overrides.methods.is_empty() {
            file.methods.unwrap_or_else(|| vec![Method::Ols, Method::Ridge])
        } else {
            overrides.methods.clone()
        };
        methods.dedup();
        if methods.is_empty() {
            return Err(bad("at least one method is required"));
        }

        let lambda_file = file.lambda.unwrap_or_default();
        let grid_default = LambdaGrid::default();
        let lambda_grid = LambdaGrid {
            min: lambda_file.min.unwrap_or(grid_default.min),
            max: lambda_file.max.unwrap_or(grid_default.max),
            points: lambda_file.points.unwrap_or(grid_default.points),
        };
        if !(lambda_grid.min > 0.0 && lambda_grid.min <= lambda_grid.max && lambda_grid.max.is_finite())
            || lambda_grid.points == 0
        {
            return Err(bad("lambda grid needs 0 < min <= max and at least one point"));
        }
        let fixed_lambda = overrides.lambda.or(lambda_file.fixed);
        if let Some(l) = fixed_lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(bad(format!("fixed lambda must be finite and non-negative, got {l}")));
            }
        }

        let mut input = file.input;
        if !overrides.messages.is_empty() {
            input = Some(InputSection {
                messages: overrides.messages.clone(),
            });
        }
        let mut synth = file.synth;
        if let Some(days) = overrides.synth_days {
            synth.get_or_insert_with(SynthSection::default).days = days;
        }
        let seed = overrides.seed.or(file.seed).unwrap_or(0);
        let source = match (input, synth) {
            (Some(input), None) => {
                if input.messages.is_empty() {
                    return Err(bad("input.messages is empty"));
                }
                Source::Files {
                    messages: input.messages,
                }
            }
            (None, Some(synth)) => {
                synth.first_date()?;
                synth
                    .zi_params(seed)
                    .validate()
                    .map_err(|e| bad(e.to_string()))?;
                Source::Synth(synth)
            }
            (Some(_), Some(_)) => return Err(bad("give either [input] or [synth], not both")),
            (None, None) => return Err(bad("no data source: give [input] message files or a [synth] section")),
        };

        let output_dir = overrides
            .output_dir
            .clone()
            .or(env_output_dir)
            .or(file.output_dir)
            .unwrap_or_else(|| PathBuf::from("mlofi-out"));

        Ok(RunConfig {
            source,
            session,
            grid,
            levels,
            methods,
            lambda_grid,
            fixed_lambda,
            folds,
            ridge: RidgeOptions {
                penalize_intercept: file.penalize_intercept.unwrap_or(true),
                standardize: file.standardize.unwrap_or(false),
            },
            seed,
            output_dir,
        })
    }
}
