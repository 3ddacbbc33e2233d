use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{BookError, BookState, EventKind, Side, Timestamp};
use crate::cv::{contiguous_folds, training_rows};
use crate::inference::{
    diagnose_collinearity, fit, select_lambda, significance_summary, CoefficientSummary, CollinearityDiagnostics,
    InferenceError, LambdaGrid, Method, RegressionFit, RidgeOptions,
};
use crate::lobster::{DaySlice, SessionConfig};
use crate::sampling::RegressionProblem;

/// Depth levels reported by the book summary.
pub const SUMMARY_LEVELS: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum EvaluationError {
    #[error("no regression problems to evaluate")]
    NoProblems,
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("{levels} levels requested but problems carry {available}")]
    TooManyLevels { levels: usize, available: usize },
    #[error("fold {fold}: {source}")]
    Fold { fold: usize, source: InferenceError },
    #[error("{date} window {window}: {source}")]
    Window {
        date: String,
        window: usize,
        source: InferenceError,
    },
    #[error("lambda selection: {0}")]
    Lambda(InferenceError),
    #[error("diagnostics: {0}")]
    Diagnostics(InferenceError),
    #[error("{date}: {source}")]
    Replay { date: String, source: BookError },
}

/// Settings shared by the evaluation routines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    pub max_levels: usize,
    pub folds: usize,
    pub lambda_grid: LambdaGrid,
    pub ridge: RidgeOptions,
    /// Use this Ridge penalty at every M instead of cross-validating one.
    pub fixed_lambda: Option<f64>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            max_levels: 10,
            folds: 5,
            lambda_grid: LambdaGrid::default(),
            ridge: RidgeOptions::default(),
            fixed_lambda: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsePoint {
    pub levels: usize,
    pub lambda: f64,
    pub in_sample_rmse: f64,
    pub out_sample_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseCurve {
    pub method: Method,
    pub points: Vec<RmsePoint>,
}

impl RmseCurve {
    pub fn at(&self, levels: usize) -> Option<&RmsePoint> {
        self.points.iter().find(|p| p.levels == levels)
    }
}

fn rmse(resid: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = resid.fold((0.0, 0usize), |(s, n), r| (s + r * r, n + 1));
    (sum / n as f64).sqrt()
}

/// Fold-averaged in-sample and out-of-sample RMSE of one model.
///
/// `pooled` must already be in time order; folds are contiguous blocks of it.
/// In-sample RMSE is measured on the training rows of each fold.
pub fn rmse_protocol(
    pooled: &RegressionProblem,
    method: Method,
    levels: usize,
    folds: usize,
    lambda: f64,
    opts: &RidgeOptions,
) -> Result<RmsePoint, EvaluationError> {
    if folds < 2 {
        return Err(EvaluationError::TooFewFolds(folds));
    }
    check_levels(pooled, levels)?;
    let problem = pooled.with_levels(levels);
    let rows = problem.rows();
    let per_fold: Vec<(f64, f64)> = contiguous_folds(rows, folds)
        .into_iter()
        .enumerate()
        .map(|(fold, held_out)| {
            let train = problem.select_rows(&training_rows(rows, &held_out));
            let fitted = fit(&train, method, lambda, opts).map_err(|source| EvaluationError::Fold { fold, source })?;
            let in_sample = rmse((&train.y - fitted.predict(&train.x)).iter().copied());
            let x_val = problem.x.rows(held_out.start, held_out.len()).into_owned();
            let y_val = problem.y.rows(held_out.start, held_out.len());
            let out_sample = rmse((y_val - fitted.predict(&x_val)).iter().copied());
            Ok((in_sample, out_sample))
        })
        .collect::<Result<_, EvaluationError>>()?;
    let k = per_fold.len() as f64;
    Ok(RmsePoint {
        levels,
        lambda: if method == Method::Ridge { lambda } else { 0.0 },
        in_sample_rmse: per_fold.iter().map(|p| p.0).sum::<f64>() / k,
        out_sample_rmse: per_fold.iter().map(|p| p.1).sum::<f64>() / k,
    })
}

fn check_levels(problem: &RegressionProblem, levels: usize) -> Result<(), EvaluationError> {
    if levels == 0 || levels > problem.levels() {
        return Err(EvaluationError::TooManyLevels {
            levels,
            available: problem.levels(),
        });
    }
    Ok(())
}

/// Cross-validated Ridge penalty for each M = 1..=max_levels on pooled rows.
pub fn select_lambdas(pooled: &RegressionProblem, config: &EvaluationConfig) -> Result<Vec<f64>, EvaluationError> {
    check_levels(pooled, config.max_levels)?;
    if let Some(lambda) = config.fixed_lambda {
        return Ok(vec![lambda; config.max_levels]);
    }
    (1..=config.max_levels)
        .into_par_iter()
        .map(|m| {
            select_lambda(&pooled.with_levels(m), &config.lambda_grid, config.folds, &config.ridge)
                .map(|s| s.lambda_hat)
                .map_err(EvaluationError::Lambda)
        })
        .collect()
}

/// RMSE curve over M = 1..=lambdas.len(); `lambdas[m-1]` is used at M = m
/// (ignored for OLS).
pub fn rmse_curve(
    pooled: &RegressionProblem,
    method: Method,
    lambdas: &[f64],
    folds: usize,
    opts: &RidgeOptions,
) -> Result<RmseCurve, EvaluationError> {
    let points = lambdas
        .par_iter()
        .enumerate()
        .map(|(i, &lambda)| rmse_protocol(pooled, method, i + 1, folds, lambda, opts))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RmseCurve { method, points })
}

/// Fits every window at a fixed M. Output order follows `problems`.
pub fn fit_windows(
    problems: &[RegressionProblem],
    method: Method,
    levels: usize,
    lambda: f64,
    opts: &RidgeOptions,
) -> Result<Vec<RegressionFit>, EvaluationError> {
    problems
        .par_iter()
        .map(|p| {
            check_levels(p, levels)?;
            fit(&p.with_levels(levels), method, lambda, opts).map_err(|source| EvaluationError::Window {
                date: p.date.clone(),
                window: p.window,
                source,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct R2Point {
    pub levels: usize,
    pub mean_r2: f64,
    pub mean_adj_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R2Curve {
    pub method: Method,
    pub points: Vec<R2Point>,
}

/// Mean (adjusted) R² across window fits for each M = 1..=lambdas.len().
pub fn adjusted_r2_curve(
    problems: &[RegressionProblem],
    method: Method,
    lambdas: &[f64],
    opts: &RidgeOptions,
) -> Result<R2Curve, EvaluationError> {
    if problems.is_empty() {
        return Err(EvaluationError::NoProblems);
    }
    let mut points = Vec::with_capacity(lambdas.len());
    for (i, &lambda) in lambdas.iter().enumerate() {
        let fits = fit_windows(problems, method, i + 1, lambda, opts)?;
        let n = fits.len() as f64;
        points.push(R2Point {
            levels: i + 1,
            mean_r2: fits.iter().map(|f| f.r2).sum::<f64>() / n,
            mean_adj_r2: fits.iter().map(|f| f.adj_r2).sum::<f64>() / n,
        });
    }
    Ok(R2Curve { method, points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementRow {
    pub model: String,
    pub levels: usize,
    pub out_sample_rmse: f64,
    /// 100·(1 − rmse / rmse of the OFI row).
    pub improvement_pct: f64,
}

pub fn improvement_pct(rmse_ofi: f64, rmse_mlofi: f64) -> f64 {
    100.0 * (1.0 - rmse_mlofi / rmse_ofi)
}

/// Out-of-sample RMSE of OFI (OLS at M = 1) against the deepest MLOFI model of
/// each curve. Returns `None` unless an OLS curve with an M = 1 point exists.
pub fn improvement_table(curves: &[RmseCurve]) -> Option<Vec<ImprovementRow>> {
    let ofi = curves.iter().find(|c| c.method == Method::Ols)?.at(1)?.out_sample_rmse;
    let mut rows = vec![ImprovementRow {
        model: "OFI".into(),
        levels: 1,
        out_sample_rmse: ofi,
        improvement_pct: 0.0,
    }];
    for curve in curves {
        let deepest = curve.points.iter().max_by_key(|p| p.levels)?;
        rows.push(ImprovementRow {
            model: format!("MLOFI-{}", curve.method.name()),
            levels: deepest.levels,
            out_sample_rmse: deepest.out_sample_rmse,
            improvement_pct: improvement_pct(ofi, deepest.out_sample_rmse),
        });
    }
    Some(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalityRow {
    /// 0-based intra-day window index.
    pub window: usize,
    pub fits: usize,
    /// Mean fitted coefficients, intercept first.
    pub mean_coeffs: Vec<f64>,
}

/// Mean fitted coefficients grouped by intra-day window index.
pub fn seasonality_profile(
    problems: &[RegressionProblem],
    method: Method,
    levels: usize,
    lambda: f64,
    opts: &RidgeOptions,
) -> Result<Vec<SeasonalityRow>, EvaluationError> {
    let fits = fit_windows(problems, method, levels, lambda, opts)?;
    let max_window = problems.iter().map(|p| p.window).max().ok_or(EvaluationError::NoProblems)?;
    let mut rows: Vec<SeasonalityRow> = (0..=max_window)
        .map(|window| SeasonalityRow {
            window,
            fits: 0,
            mean_coeffs: vec![0.0; levels + 1],
        })
        .collect();
    for (p, f) in problems.iter().zip(&fits) {
        let row = &mut rows[p.window];
        row.fits += 1;
        for (acc, c) in row.mean_coeffs.iter_mut().zip(&f.coeffs) {
            *acc += c;
        }
    }
    rows.retain(|r| r.fits > 0);
    for row in &mut rows {
        for c in &mut row.mean_coeffs {
            *c /= row.fits as f64;
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceTable {
    pub method: Method,
    pub levels: usize,
    pub lambda: f64,
    pub windows: usize,
    pub coefficients: Vec<CoefficientSummary>,
}

pub fn significance_table(
    problems: &[RegressionProblem],
    method: Method,
    levels: usize,
    lambda: f64,
    opts: &RidgeOptions,
) -> Result<SignificanceTable, EvaluationError> {
    let fits = fit_windows(problems, method, levels, lambda, opts)?;
    let coefficients = significance_summary(&fits).map_err(|_| EvaluationError::NoProblems)?;
    Ok(SignificanceTable {
        method,
        levels,
        lambda: if method == Method::Ridge { lambda } else { 0.0 },
        windows: fits.len(),
        coefficients,
    })
}

/// Mean book state over two-sided moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BookMeans {
    /// Mid-price in dollars.
    pub mid: f64,
    /// Spread in ticks.
    pub spread: f64,
    /// Bid depth at levels 1..=5 (absent levels count as 0).
    pub bid_depth: Vec<f64>,
    pub ask_depth: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Concentration {
    pub within_spread: f64,
    pub at_best: f64,
    pub deeper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BookSummary {
    pub days: usize,
    /// Each post-event state weighted by the time until the next event.
    pub duration_weighted: BookMeans,
    /// Each post-event state weighted equally.
    pub event_sampled: BookMeans,
    /// Percentages of order-bearing events by price location.
    pub event_concentration: Concentration,
    /// Same, weighted by event size.
    pub volume_concentration: Concentration,
}

#[derive(Debug, Clone, Default)]
struct MeanAcc {
    weight: f64,
    mid: f64,
    spread: f64,
    bid: [f64; SUMMARY_LEVELS],
    ask: [f64; SUMMARY_LEVELS],
}

impl MeanAcc {
    fn add(&mut self, book: &BookState, tick: i64, w: f64) {
        let Ok(quote) = book.mid_and_spread() else {
            return;
        };
        if w <= 0.0 {
            return;
        }
        self.weight += w;
        self.mid += w * quote.mid_price() / 10_000.0;
        self.spread += w * quote.spread as f64 / tick as f64;
        for (slot, level) in self.bid.iter_mut().zip(book.levels(Side::Buy)) {
            *slot += w * level.depth as f64;
        }
        for (slot, level) in self.ask.iter_mut().zip(book.levels(Side::Sell)) {
            *slot += w * level.depth as f64;
        }
    }

    fn merge(&mut self, other: &MeanAcc) {
        self.weight += other.weight;
        self.mid += other.mid;
        self.spread += other.spread;
        for i in 0..SUMMARY_LEVELS {
            self.bid[i] += other.bid[i];
            self.ask[i] += other.ask[i];
        }
    }

    fn finish(&self) -> BookMeans {
        let w = if self.weight > 0.0 { self.weight } else { f64::NAN };
        BookMeans {
            mid: self.mid / w,
            spread: self.spread / w,
            bid_depth: self.bid.iter().map(|v| v / w).collect(),
            ask_depth: self.ask.iter().map(|v| v / w).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct ConcentrationAcc {
    counts: [f64; 3],
    volume: [f64; 3],
}

impl ConcentrationAcc {
    fn finish(counts: &[f64; 3]) -> Concentration {
        let total: f64 = counts.iter().sum();
        let pct = |v: f64| if total > 0.0 { 100.0 * v / total } else { 0.0 };
        Concentration {
            within_spread: pct(counts[0]),
            at_best: pct(counts[1]),
            deeper: pct(counts[2]),
        }
    }
}

/// 0 = within the spread, 1 = at the own-side best, 2 = deeper in the book.
fn location(book: &BookState, side: Side, price: crate::book::Price) -> usize {
    let best = match side {
        Side::Buy => book.best_bid(),
        Side::Sell => book.best_ask(),
    };
    let Some(best) = best else {
        return 0;
    };
    let improves = match side {
        Side::Buy => price > best.price,
        Side::Sell => price < best.price,
    };
    if improves {
        0
    } else if price == best.price {
        1
    } else {
        2
    }
}

struct DaySummary {
    timed: MeanAcc,
    sampled: MeanAcc,
    concentration: ConcentrationAcc,
}

fn summarize_day(day: &DaySlice, session: &SessionConfig) -> Result<DaySummary, EvaluationError> {
    let mut book = day.seed.as_ref().map(BookState::from_snapshot).unwrap_or_default();
    let mut timed = MeanAcc::default();
    let mut sampled = MeanAcc::default();
    let mut conc = ConcentrationAcc::default();
    let mut clock: Timestamp = session.session_start;
    for ev in &day.events {
        if ev.time > clock {
            timed.add(&book, session.tick, (ev.time.0 - clock.0) as f64);
            clock = ev.time;
        }
        let order_flow = matches!(
            ev.kind,
            EventKind::LimitArrival | EventKind::PartialCancel | EventKind::FullCancel | EventKind::VisibleExecution
        );
        if order_flow {
            let slot = location(&book, ev.side, ev.price);
            conc.counts[slot] += 1.0;
            conc.volume[slot] += ev.size as f64;
        }
        book.apply(ev).map_err(|source| EvaluationError::Replay {
            date: day.date.clone(),
            source,
        })?;
        sampled.add(&book, session.tick, 1.0);
    }
    if session.session_end > clock {
        timed.add(&book, session.tick, (session.session_end.0 - clock.0) as f64);
    }
    Ok(DaySummary {
        timed,
        sampled,
        concentration: conc,
    })
}

/// Book averages and order-flow location shares over a set of days.
pub fn summarize_book(days: &[DaySlice], session: &SessionConfig) -> Result<BookSummary, EvaluationError> {
    let per_day = days
        .par_iter()
        .map(|d| summarize_day(d, session))
        .collect::<Result<Vec<_>, _>>()?;
    let mut timed = MeanAcc::default();
    let mut sampled = MeanAcc::default();
    let mut conc = ConcentrationAcc::default();
    for d in &per_day {
        timed.merge(&d.timed);
        sampled.merge(&d.sampled);
        for i in 0..3 {
            conc.counts[i] += d.concentration.counts[i];
            conc.volume[i] += d.concentration.volume[i];
        }
    }
    Ok(BookSummary {
        days: days.len(),
        duration_weighted: timed.finish(),
        event_sampled: sampled.finish(),
        event_concentration: ConcentrationAcc::finish(&conc.counts),
        volume_concentration: ConcentrationAcc::finish(&conc.volume),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub windows: usize,
    pub pooled_rows: usize,
    pub max_levels: usize,
    /// Ridge penalty selected on the pooled rows, per M = 1..=max_levels.
    pub lambda_hat: Vec<f64>,
    pub r2_curves: Vec<R2Curve>,
    pub rmse_curves: Vec<RmseCurve>,
    pub improvement: Vec<ImprovementRow>,
    pub significance: Vec<SignificanceTable>,
    pub diagnostics: CollinearityDiagnostics,
    pub seasonality: Vec<(Method, Vec<SeasonalityRow>)>,
    pub book_summary: Option<BookSummary>,
}

/// Full goodness-of-fit evaluation of one instrument's window problems.
///
/// `problems` must be in time order (date, then window) and carry at least
/// `config.max_levels` MLOFI columns.
pub fn evaluate(
    problems: &[RegressionProblem],
    days: Option<(&[DaySlice], &SessionConfig)>,
    config: &EvaluationConfig,
) -> Result<EvaluationReport, EvaluationError> {
    if problems.is_empty() {
        return Err(EvaluationError::NoProblems);
    }
    let m = config.max_levels;
    let pooled = RegressionProblem::pooled(problems);
    let lambda_hat = select_lambdas(&pooled, config)?;
    let zeros = vec![0.0; m];
    let methods = [(Method::Ols, &zeros), (Method::Ridge, &lambda_hat)];

    let mut r2_curves = Vec::new();
    let mut rmse_curves = Vec::new();
    let mut significance = Vec::new();
    let mut seasonality = Vec::new();
    for (method, lambdas) in methods {
        r2_curves.push(adjusted_r2_curve(problems, method, lambdas, &config.ridge)?);
        rmse_curves.push(rmse_curve(&pooled, method, lambdas, config.folds, &config.ridge)?);
        significance.push(significance_table(problems, method, m, lambdas[m - 1], &config.ridge)?);
        seasonality.push((
            method,
            seasonality_profile(problems, method, m, lambdas[m - 1], &config.ridge)?,
        ));
    }
    let improvement = improvement_table(&rmse_curves).expect("OLS curve starts at M = 1");
    let diagnostics = diagnose_collinearity(&pooled.with_levels(m)).map_err(EvaluationError::Diagnostics)?;
    let book_summary = days.map(|(d, s)| summarize_book(d, s)).transpose()?;
    Ok(EvaluationReport {
        windows: problems.len(),
        pooled_rows: pooled.rows(),
        max_levels: m,
        lambda_hat,
        r2_curves,
        rmse_curves,
        improvement,
        significance,
        diagnostics,
        seasonality,
        book_summary,
    })
}
