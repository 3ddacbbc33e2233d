//! Calendar-time sampling grid, day replay, and per-window regression problems.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{BookError, BookState, MidQuote, Timestamp};
use crate::imbalance::{incremental_delta, ofi_event, BestQuotes, IntervalAccumulator, MlofiSample};
use crate::lobster::{DaySlice, SessionConfig};

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("grid does not divide evenly: {0}")]
    IndivisibleGrid(String),
    #[error("window {date}/{window}: {rows} usable rows, need at least {needed}")]
    TooFewRows {
        date: String,
        window: usize,
        rows: usize,
        needed: usize,
    },
    #[error("{date}: {source}")]
    Replay {
        date: String,
        #[source]
        source: BookError,
    },
}

/// Window length ΔT and sub-window length Δt, in whole seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub window_secs: u64,
    pub subwindow_secs: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            window_secs: 1800,
            subwindow_secs: 10,
        }
    }
}

/// A validated two-level grid over one session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub start: Timestamp,
    pub windows: usize,
    pub subwindows: usize,
    pub subwindow_nanos: u64,
}

impl Grid {
    pub fn new(session: &SessionConfig, spec: &GridSpec) -> Result<Self, SamplingError> {
        let session_nanos = session.length_nanos();
        let window = spec.window_secs * Timestamp::NANOS_PER_SEC;
        let sub = spec.subwindow_secs * Timestamp::NANOS_PER_SEC;
        if window == 0 || sub == 0 {
            return Err(SamplingError::IndivisibleGrid("lengths must be positive".into()));
        }
        if window % sub != 0 {
            return Err(SamplingError::IndivisibleGrid(format!(
                "window {}s is not a multiple of sub-window {}s",
                spec.window_secs, spec.subwindow_secs
            )));
        }
        if session_nanos % window != 0 {
            return Err(SamplingError::IndivisibleGrid(format!(
                "session of {}s is not a multiple of window {}s",
                session_nanos / Timestamp::NANOS_PER_SEC,
                spec.window_secs
            )));
        }
        Ok(Grid {
            start: session.session_start,
            windows: (session_nanos / window) as usize,
            subwindows: (window / sub) as usize,
            subwindow_nanos: sub,
        })
    }

    pub fn intervals(&self) -> usize {
        self.windows * self.subwindows
    }

    /// Boundary t_j of the flattened grid, j = 0..=intervals().
    pub fn boundary(&self, j: usize) -> Timestamp {
        Timestamp(self.start.0 + j as u64 * self.subwindow_nanos)
    }

    pub fn end(&self) -> Timestamp {
        self.boundary(self.intervals())
    }

    /// Flattened index of the interval (t_{j}, t_{j+1}] containing `t`.
    /// Times at or before the grid start, or after its end, map to nothing.
    pub fn interval_of(&self, t: Timestamp) -> Option<usize> {
        if t <= self.start || t > self.end() {
            return None;
        }
        Some(((t.0 - self.start.0 - 1) / self.subwindow_nanos) as usize)
    }

    /// (window i, sub-window k), both 0-based, of a flattened interval index.
    pub fn split(&self, j: usize) -> (usize, usize) {
        (j / self.subwindows, j % self.subwindows)
    }
}

/// One window: its start T_i and sub-window boundaries t_{i,0}..t_{i,K}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridWindow {
    pub start: Timestamp,
    pub boundaries: Vec<Timestamp>,
}

pub fn build_grid(session: &SessionConfig, spec: &GridSpec) -> Result<Vec<GridWindow>, SamplingError> {
    let grid = Grid::new(session, spec)?;
    Ok((0..grid.windows)
        .map(|i| {
            let first = i * grid.subwindows;
            GridWindow {
                start: grid.boundary(first),
                boundaries: (first..=first + grid.subwindows).map(|j| grid.boundary(j)).collect(),
            }
        })
        .collect())
}

/// Replayed samples of one day, one entry per grid interval; `None` marks an
/// interval discarded because the book was one-sided at some point in it.
#[derive(Debug, Clone, PartialEq)]
pub struct DaySamples {
    pub date: String,
    pub grid: Grid,
    pub samples: Vec<Option<MlofiSample>>,
    pub untracked_events: u64,
}

impl DaySamples {
    pub fn discarded(&self) -> usize {
        self.samples.iter().filter(|s| s.is_none()).count()
    }
}

/// Replays a day through the book and aggregates every grid interval.
///
/// Events at exactly the session start belong to the initial state: they are
/// applied before P(t_0) is measured and enter no interval.
pub fn replay_day(
    day: &DaySlice,
    session: &SessionConfig,
    spec: &GridSpec,
    levels: usize,
) -> Result<DaySamples, SamplingError> {
    let grid = Grid::new(session, spec)?;
    let replay_err = |source| SamplingError::Replay {
        date: day.date.clone(),
        source,
    };
    let mut book = day.seed.as_ref().map(BookState::from_snapshot).unwrap_or_default();
    let mut events = day.events.iter().peekable();

    while let Some(ev) = events.next_if(|ev| ev.time <= grid.start) {
        book.apply(ev).map_err(replay_err)?;
    }

    let mut samples = Vec::with_capacity(grid.intervals());
    let mut mid_start: Option<MidQuote> = book.mid_and_spread().ok();
    for j in 0..grid.intervals() {
        let end = grid.boundary(j + 1);
        let mut acc = IntervalAccumulator::new(levels);
        let mut one_sided = mid_start.is_none();
        while let Some(ev) = events.next_if(|ev| ev.time <= end) {
            let index = book.event_seq();
            let best_before = BestQuotes::of(&book);
            let change = book.apply(ev).map_err(replay_err)?;
            acc.add_delta(&incremental_delta(&book, change.as_ref(), levels, index));
            acc.add_ofi(ofi_event(best_before, BestQuotes::of(&book)));
            acc.add_trade(ev.signed_trade_volume());
            one_sided |= book.best_bid().is_none() || book.best_ask().is_none();
        }
        let mid_end = book.mid_and_spread().ok();
        let sample = match (mid_start, mid_end) {
            (Some(before), Some(after)) if !one_sided => {
                Some(acc.finish(grid.boundary(j), end, before, after))
            }
            _ => None,
        };
        samples.push(sample);
        mid_start = mid_end;
    }

    Ok(DaySamples {
        date: day.date.clone(),
        grid,
        samples,
        untracked_events: book.untracked_events(),
    })
}

/// Design matrix and response for one (date, window) regression.
///
/// Column 0 of `x` is the intercept; column m holds MLOFIᵐ. `y` is ΔP in ticks.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    pub date: String,
    pub window: usize,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl RegressionProblem {
    /// Builds a problem from regressor rows, prepending the intercept column.
    pub fn from_rows(date: impl Into<String>, window: usize, features: &[Vec<f64>], y: Vec<f64>) -> Self {
        let levels = features.first().map_or(0, Vec::len);
        let x = DMatrix::from_fn(features.len(), levels + 1, |r, c| {
            if c == 0 {
                1.0
            } else {
                features[r][c - 1]
            }
        });
        RegressionProblem {
            date: date.into(),
            window,
            x,
            y: DVector::from_vec(y),
        }
    }

    pub fn rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn levels(&self) -> usize {
        self.x.ncols() - 1
    }

    /// The nested problem using only the first `levels` MLOFI columns.
    pub fn with_levels(&self, levels: usize) -> RegressionProblem {
        assert!(levels <= self.levels(), "cannot widen a problem");
        RegressionProblem {
            date: self.date.clone(),
            window: self.window,
            x: self.x.columns(0, levels + 1).into_owned(),
            y: self.y.clone(),
        }
    }

    /// Stacks problems row-wise, in the given order.
    pub fn pooled<'a>(problems: impl IntoIterator<Item = &'a RegressionProblem>) -> RegressionProblem {
        let problems: Vec<&RegressionProblem> = problems.into_iter().collect();
        let cols = problems.first().map_or(1, |p| p.x.ncols());
        let rows: usize = problems.iter().map(|p| p.rows()).sum();
        let mut x = DMatrix::zeros(rows, cols);
        let mut y = DVector::zeros(rows);
        let mut r = 0;
        for p in &problems {
            x.rows_mut(r, p.rows()).copy_from(&p.x);
            y.rows_mut(r, p.rows()).copy_from(&p.y);
            r += p.rows();
        }
        RegressionProblem {
            date: "pooled".into(),
            window: 0,
            x,
            y,
        }
    }

    /// The sub-problem made of the given rows.
    pub fn select_rows(&self, rows: &[usize]) -> RegressionProblem {
        RegressionProblem {
            date: self.date.clone(),
            window: self.window,
            x: self.x.select_rows(rows),
            y: self.y.select_rows(rows),
        }
    }
}

/// Problems assembled from replayed days, with the bookkeeping of what was
/// left out.
#[derive(Debug, Clone, Default)]
pub struct Assembly {
    pub problems: Vec<RegressionProblem>,
    pub discarded_intervals: usize,
    /// (date, window) pairs dropped for having too few usable rows.
    pub dropped_windows: Vec<(String, usize)>,
}

pub fn assemble_window(
    day: &DaySamples,
    window: usize,
    levels: usize,
    tick: i64,
) -> Result<RegressionProblem, SamplingError> {
    let k = day.grid.subwindows;
    let kept: Vec<&MlofiSample> = day.samples[window * k..(window + 1) * k].iter().flatten().collect();
    let needed = levels + 2;
    if kept.len() < needed {
        return Err(SamplingError::TooFewRows {
            date: day.date.clone(),
            window,
            rows: kept.len(),
            needed,
        });
    }
    let features: Vec<Vec<f64>> = kept
        .iter()
        .map(|s| s.mlofi.iter().take(levels).map(|&v| v as f64).collect())
        .collect();
    let y = kept.iter().map(|s| s.delta_p_ticks(tick)).collect();
    Ok(RegressionProblem::from_rows(day.date.clone(), window, &features, y))
}

/// One regression problem per (date, window), in date then window order.
pub fn assemble_problems(days: &[DaySamples], levels: usize, tick: i64) -> Assembly {
    let mut out = Assembly::default();
    for day in days {
        out.discarded_intervals += day.discarded();
        for window in 0..day.grid.windows {
            match assemble_window(day, window, levels, tick) {
                Ok(problem) => out.problems.push(problem),
                Err(_) => out.dropped_windows.push((day.date.clone(), window)),
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn session(start: u64, end: u64) -> SessionConfig {
        SessionConfig {
            session_start: Timestamp::from_secs(start),
            session_end: Timestamp::from_secs(end),
            ..SessionConfig::default()
        }
    }

    #[test]
    fn default_grid_is_11_by_180() {
        let windows = build_grid(&SessionConfig::default(), &GridSpec::default()).unwrap();
        assert_eq!(windows.len(), 11);
        assert!(windows.iter().all(|w| w.boundaries.len() == 181));
        assert_eq!(windows[0].boundaries[0], Timestamp::from_hms(10, 0, 0));
        assert_eq!(windows[0].boundaries[1], Timestamp::from_hms(10, 0, 10));
        assert_eq!(windows[10].boundaries[180], Timestamp::from_hms(15, 30, 0));
        for pair in windows.windows(2) {
            assert_eq!(pair[0].boundaries[180], pair[1].boundaries[0]);
        }
    }

    #[test]
    fn single_window_single_interval() {
        let s = SessionConfig::default();
        let len = s.length_nanos() / Timestamp::NANOS_PER_SEC;
        let spec = GridSpec {
            window_secs: len,
            subwindow_secs: len,
        };
        let windows = build_grid(&s, &spec).unwrap();
        assert_eq!(windows.len(), 1);
        assert_eq!(windows[0].boundaries, vec![s.session_start, s.session_end]);
    }

    #[test]
    fn hour_windows_do_not_divide_five_and_a_half_hours() {
        let spec = GridSpec {
            window_secs: 3600,
            subwindow_secs: 20,
        };
        assert!(matches!(
            build_grid(&SessionConfig::default(), &spec),
            Err(SamplingError::IndivisibleGrid(_))
        ));
        let spec = GridSpec {
            window_secs: 1800,
            subwindow_secs: 7,
        };
        assert!(build_grid(&SessionConfig::default(), &spec).is_err());
    }

    #[test]
    fn interval_boundaries_are_left_open_right_closed() {
        let grid = Grid::new(&session(36_000, 36_060), &GridSpec { window_secs: 60, subwindow_secs: 10 }).unwrap();
        assert_eq!(grid.interval_of(Timestamp::from_secs(36_000)), None);
        assert_eq!(grid.interval_of(Timestamp(36_000 * Timestamp::NANOS_PER_SEC + 1)), Some(0));
        assert_eq!(grid.interval_of(Timestamp::from_secs(36_010)), Some(0));
        assert_eq!(grid.interval_of(Timestamp(36_010 * Timestamp::NANOS_PER_SEC + 1)), Some(1));
        assert_eq!(grid.interval_of(Timestamp::from_secs(36_060)), Some(5));
        assert_eq!(grid.interval_of(Timestamp::from_secs(36_061)), None);
    }

    #[test]
    fn window_with_discarded_intervals_loses_rows() {
        let grid = Grid::new(&SessionConfig::default(), &GridSpec::default()).unwrap();
        let sample = |j: usize| MlofiSample {
            start: grid.boundary(j),
            end: grid.boundary(j + 1),
            mlofi: vec![j as i64, 1],
            ofi: j as i64,
            buy_volume: 0,
            sell_volume: 0,
            delta_p_twice: 200,
        };
        let mut samples: Vec<Option<MlofiSample>> = (0..grid.intervals()).map(|j| Some(sample(j))).collect();
        for j in [3, 50, 179] {
            samples[j] = None;
        }
        let day = DaySamples {
            date: "d".into(),
            grid,
            samples,
            untracked_events: 0,
        };
        let assembly = assemble_problems(std::slice::from_ref(&day), 2, 100);
        assert_eq!(assembly.problems.len(), 11);
        assert_eq!(assembly.problems[0].rows(), 177);
        assert_eq!(assembly.problems[1].rows(), 180);
        assert_eq!(assembly.discarded_intervals, 3);
        assert_eq!(assembly.problems[0].y[0], 1.0);
        assert!(assembly.problems[0].x.column(0).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn too_few_rows_drops_the_window() {
        let grid = Grid::new(&session(36_000, 36_040), &GridSpec { window_secs: 40, subwindow_secs: 10 }).unwrap();
        let day = DaySamples {
            date: "d".into(),
            grid,
            samples: vec![None; 4],
            untracked_events: 0,
        };
        assert!(matches!(
            assemble_window(&day, 0, 1, 100),
            Err(SamplingError::TooFewRows { rows: 0, needed: 3, .. })
        ));
        let assembly = assemble_problems(&[day], 1, 100);
        assert!(assembly.problems.is_empty());
        assert_eq!(assembly.dropped_windows, vec![("d".to_string(), 0)]);
    }

    #[test]
    fn nested_and_pooled_problems() {
        let p = RegressionProblem::from_rows("d", 0, &[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]], vec![1.0, 2.0, 3.0]);
        let one = p.with_levels(1);
        assert_eq!(one.x.ncols(), 2);
        assert_eq!(one.x[(2, 1)], 5.0);
        let pooled = RegressionProblem::pooled([&p, &p]);
        assert_eq!(pooled.rows(), 6);
        assert_eq!(pooled.x[(4, 2)], 4.0);
        assert_eq!(pooled.y[5], 3.0);
        assert_eq!(p.select_rows(&[2]).y[0], 3.0);
    }

    proptest! {
        #[test]
        fn grid_partitions_the_session(sub in prop::sample::select(vec![1u64, 2, 5, 10, 15, 30, 60]), win_mult in 1u64..20, windows in 1u64..6, offsets in prop::collection::vec(1u64..1_000_000_000_000, 1..200)) {
            let window_secs = sub * win_mult;
            let s = SessionConfig {
                session_start: Timestamp::from_hms(10, 0, 0),
                session_end: Timestamp::from_secs(36_000 + window_secs * windows),
                ..SessionConfig::default()
            };
            let grid = Grid::new(&s, &GridSpec { window_secs, subwindow_secs: sub }).unwrap();
            let total: u64 = (0..grid.intervals()).map(|j| grid.boundary(j + 1).0 - grid.boundary(j).0).sum();
            prop_assert_eq!(total, s.length_nanos());
            for off in offsets {
                let t = Timestamp(s.session_start.0 + off % s.length_nanos() + 1);
                let hits: Vec<usize> = (0..grid.intervals())
                    .filter(|&j| grid.boundary(j) < t && t <= grid.boundary(j + 1))
                    .collect();
                prop_assert_eq!(hits.len(), 1);
                prop_assert_eq!(grid.interval_of(t), Some(hits[0]));
            }
        }
    }
}
