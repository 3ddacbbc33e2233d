use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{BookState, EventKind, LevelQuote, LevelSnapshot, LobEvent, Price, Side, Timestamp};
use crate::lobster::{format_message_line, format_orderbook_row, DaySlice, SessionConfig};
use crate::sampling::RegressionProblem;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
}

fn invalid(msg: impl Into<String>) -> SynthError {
    SynthError::InvalidParams(msg.into())
}

/// Zero-intelligence order flow: independent Poisson limit arrivals, market
/// orders and cancellations with geometric sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZiParams {
    /// Limit arrivals per second per price level per side.
    pub limit_rate: f64,
    /// Market orders per second per side.
    pub market_rate: f64,
    /// Cancellations per second per resting order.
    pub cancel_rate: f64,
    /// Number of price levels, counted from the opposite best, where limits land.
    pub price_band: usize,
    /// Mean order size in shares.
    pub mean_size: f64,
    /// Probability that a cancellation removes only part of the order.
    pub partial_cancel_prob: f64,
    /// Best bid of the opening book, in price units.
    pub opening_bid: i64,
    pub seed: u64,
}

impl Default for ZiParams {
    fn default() -> Self {
        ZiParams {
            limit_rate: 0.2,
            market_rate: 0.1,
            cancel_rate: 0.02,
            price_band: 5,
            mean_size: 100.0,
            partial_cancel_prob: 0.2,
            opening_bid: 1_000_000,
            seed: 1,
        }
    }
}

impl ZiParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.limit_rate) || !positive(self.market_rate) || !positive(self.cancel_rate) {
            return Err(invalid("all rates must be positive and finite"));
        }
        if self.price_band == 0 {
            return Err(invalid("price_band must be at least 1"));
        }
        if !(self.mean_size >= 1.0) || !self.mean_size.is_finite() {
            return Err(invalid("mean_size must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.partial_cancel_prob) {
            return Err(invalid("partial_cancel_prob must lie in [0, 1]"));
        }
        if self.opening_bid <= 0 {
            return Err(invalid("opening_bid must be positive"));
        }
        Ok(())
    }
}

/// Everything a ZI run produced, including what only the generator can know.
#[derive(Debug, Clone)]
pub struct ZiOutput {
    pub day: DaySlice,
    /// Gap to each Gillespie step times the total rate in force; Exp(1) i.i.d.
    pub rescaled_gaps: Vec<f64>,
    /// +1 for a buy market order, −1 for a sell, in arrival order.
    pub market_signs: Vec<i8>,
    /// Generator-side book after each emitted event (empty unless requested).
    pub snapshots: Vec<LevelSnapshot>,
}

/// Order-level book private to the generator.
#[derive(Default)]
struct ZiBook {
    bids: BTreeMap<i64, VecDeque<(i64, u64)>>,
    asks: BTreeMap<i64, VecDeque<(i64, u64)>>,
    orders: HashMap<i64, (Side, i64)>,
    live: Vec<i64>,
    live_pos: HashMap<i64, usize>,
    next_id: i64,
}

impl ZiBook {
    fn side(&self, side: Side) -> &BTreeMap<i64, VecDeque<(i64, u64)>> {
        match side {
            Side::Buy => &self.bids,
            Side::Sell => &self.asks,
        }
    }

    fn side_mut(&mut self, side: Side) -> &mut BTreeMap<i64, VecDeque<(i64, u64)>> {
        match side {
            Side::Buy => &mut self.bids,
            Side::Sell => &mut self.asks,
        }
    }

    fn best(&self, side: Side) -> Option<i64> {
        match side {
            Side::Buy => self.bids.keys().next_back().copied(),
            Side::Sell => self.asks.keys().next().copied(),
        }
    }

    fn side_orders(&self, side: Side) -> usize {
        self.side(side).values().map(VecDeque::len).sum()
    }

    fn side_depth(&self, side: Side) -> u64 {
        self.side(side).values().flatten().map(|o| o.1).sum()
    }

    fn add(&mut self, side: Side, price: i64, size: u64) -> i64 {
        self.next_id += 1;
        let id = self.next_id;
        self.side_mut(side).entry(price).or_default().push_back((id, size));
        self.orders.insert(id, (side, price));
        self.live_pos.insert(id, self.live.len());
        self.live.push(id);
        id
    }

    fn forget(&mut self, id: i64) {
        self.orders.remove(&id);
        let pos = self.live_pos.remove(&id).expect("live order");
        self.live.swap_remove(pos);
        if let Some(&moved) = self.live.get(pos) {
            self.live_pos.insert(moved, pos);
        }
    }

    /// Reduces a resting order by `size`, removing it when exhausted.
    fn reduce(&mut self, id: i64, size: u64) {
        let (side, price) = self.orders[&id];
        let levels = self.side_mut(side);
        let queue = levels.get_mut(&price).expect("level of a live order");
        let slot = queue.iter().position(|o| o.0 == id).expect("order in its level");
        queue[slot].1 -= size;
        if queue[slot].1 == 0 {
            queue.remove(slot);
            if queue.is_empty() {
                levels.remove(&price);
            }
            self.forget(id);
        }
    }

    fn snapshot(&self, levels: usize) -> LevelSnapshot {
        let quote = |(price, queue): (&i64, &VecDeque<(i64, u64)>)| {
            Some(LevelQuote {
                price: Price(*price),
                depth: queue.iter().map(|o| o.1).sum(),
            })
        };
        let mut snap = LevelSnapshot::empty(levels);
        for (slot, q) in snap.bids.iter_mut().zip(self.bids.iter().rev().map(quote)) {
            *slot = q;
        }
        for (slot, q) in snap.asks.iter_mut().zip(self.asks.iter().map(quote)) {
            *slot = q;
        }
        snap
    }
}

struct ZiRun<'a> {
    params: &'a ZiParams,
    tick: i64,
    rng: ChaCha8Rng,
    sizes: Geometric,
    book: ZiBook,
    events: Vec<LobEvent>,
    snapshots: Vec<LevelSnapshot>,
    snapshot_levels: usize,
}

impl ZiRun<'_> {
    fn size(&mut self) -> u64 {
        1 + self.sizes.sample(&mut self.rng)
    }

    fn emit(&mut self, ev: LobEvent) {
        self.events.push(ev);
        if self.snapshot_levels > 0 {
            self.snapshots.push(self.book.snapshot(self.snapshot_levels));
        }
    }

    fn limit(&mut self, time: Timestamp, side: Side) {
        let k = self.rng.random_range(1..=self.params.price_band) as i64;
        let price = match side {
            Side::Buy => self.book.best(Side::Sell).expect("two-sided") - k * self.tick,
            Side::Sell => self.book.best(Side::Buy).expect("two-sided") + k * self.tick,
        };
        if price <= 0 {
            return;
        }
        let size = self.size();
        let id = self.book.add(side, price, size);
        self.emit(LobEvent {
            time,
            kind: EventKind::LimitArrival,
            order_id: id,
            size,
            price: Price(price),
            side,
        });
    }

    /// A market order walks the opposite side FIFO, one execution per resting
    /// order touched. Orders that would exhaust the side are dropped.
    fn market(&mut self, time: Timestamp, aggressor: Side) -> bool {
        let resting = aggressor.opposite();
        let mut remaining = self.size();
        if remaining >= self.book.side_depth(resting) {
            return false;
        }
        while remaining > 0 {
            let price = self.book.best(resting).expect("depth remains");
            let (id, size) = self.book.side(resting)[&price][0];
            let fill = size.min(remaining);
            self.book.reduce(id, fill);
            remaining -= fill;
            self.emit(LobEvent {
                time,
                kind: EventKind::VisibleExecution,
                order_id: id,
                size: fill,
                price: Price(price),
                side: resting,
            });
        }
        true
    }

    fn cancel(&mut self, time: Timestamp) {
        if self.book.live.is_empty() {
            return;
        }
        let id = self.book.live[self.rng.random_range(0..self.book.live.len())];
        let (side, price) = self.book.orders[&id];
        let size = self.book.side(side)[&price].iter().find(|o| o.0 == id).expect("live").1;
        let partial = size > 1 && self.rng.random_bool(self.params.partial_cancel_prob);
        let (kind, cancelled) = if partial {
            (EventKind::PartialCancel, self.rng.random_range(1..size))
        } else {
            if self.book.side_orders(side) == 1 {
                return;
            }
            (EventKind::FullCancel, size)
        };
        self.book.reduce(id, cancelled);
        self.emit(LobEvent {
            time,
            kind,
            order_id: id,
            size: cancelled,
            price: Price(price),
            side,
        });
    }
}

/// Runs the generator for one day. `stream` selects an independent ChaCha
/// stream under the same seed, so days of one run never share randomness.
pub fn simulate_zi_day(
    params: &ZiParams,
    session: &SessionConfig,
    date: &str,
    stream: u64,
    snapshot_levels: usize,
) -> Result<ZiOutput, SynthError> {
    params.validate()?;
    session.validate().map_err(|e| invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(stream);
    let mut run = ZiRun {
        params,
        tick: session.tick,
        rng,
        sizes: Geometric::new(1.0 / params.mean_size).map_err(|e| invalid(e.to_string()))?,
        book: ZiBook::default(),
        events: Vec::new(),
        snapshots: Vec::new(),
        snapshot_levels,
    };

    // The opening book is built by arrivals stamped at the session start.
    let start = session.session_start;
    for k in 0..params.price_band as i64 {
        for (side, price) in [
            (Side::Buy, params.opening_bid - k * session.tick),
            (Side::Sell, params.opening_bid + (k + 1) * session.tick),
        ] {
            if price <= 0 {
                continue;
            }
            let size = run.size();
            let id = run.book.add(side, price, size);
            run.emit(LobEvent {
                time: start,
                kind: EventKind::LimitArrival,
                order_id: id,
                size,
                price: Price(price),
                side,
            });
        }
    }

    let horizon = session.length_nanos() as f64 / Timestamp::NANOS_PER_SEC as f64;
    let limit_total = 2.0 * params.price_band as f64 * params.limit_rate;
    let market_total = 2.0 * params.market_rate;
    let mut clock = 0.0;
    let mut gaps = Vec::new();
    let mut signs = Vec::new();
    loop {
        let total = limit_total + market_total + params.cancel_rate * run.book.live.len() as f64;
        let gap = Exp::new(total).expect("positive rate").sample(&mut run.rng);
        clock += gap;
        if clock > horizon {
            break;
        }
        gaps.push(gap * total);
        let offset = ((clock * Timestamp::NANOS_PER_SEC as f64) as u64).min(session.length_nanos());
        let time = Timestamp(start.0 + offset);
        let pick = run.rng.random::<f64>() * total;
        let side = if run.rng.random_bool(0.5) { Side::Buy } else { Side::Sell };
        if pick < limit_total {
            run.limit(time, side);
        } else if pick < limit_total + market_total {
            if run.market(time, side) {
                signs.push(if side == Side::Buy { 1 } else { -1 });
            }
        } else {
            run.cancel(time);
        }
    }

    Ok(ZiOutput {
        day: DaySlice {
            date: date.to_string(),
            events: run.events,
            seed: None,
        },
        rescaled_gaps: gaps,
        market_signs: signs,
        snapshots: run.snapshots,
    })
}

pub fn generate_zi_day(params: &ZiParams, session: &SessionConfig, date: &str) -> Result<DaySlice, SynthError> {
    simulate_zi_day(params, session, date, 0, 0).map(|out| out.day)
}

/// One ZI day per date; day i uses stream i.
pub fn generate_zi_days(
    params: &ZiParams,
    session: &SessionConfig,
    dates: &[String],
) -> Result<Vec<DaySlice>, SynthError> {
    dates
        .par_iter()
        .enumerate()
        .map(|(i, date)| simulate_zi_day(params, session, date, i as u64, 0).map(|out| out.day))
        .collect()
}

/// `count` consecutive weekdays starting at `first` (or the next weekday).
pub fn business_dates(first: NaiveDate, count: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    let mut day = first;
    while out.len() < count {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(day.format("%Y-%m-%d").to_string());
        }
        day += Duration::days(1);
    }
    out
}

/// Ground truth for a synthetic linear price-impact regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedParams {
    /// Intercept first, then one slope per level.
    pub true_beta: Vec<f64>,
    pub noise_sd: f64,
    /// Common pairwise correlation of the regressor columns.
    pub collinearity: f64,
    pub seed: u64,
}

impl PlantedParams {
    pub fn validate(&self, rows: usize, levels: usize) -> Result<(), SynthError> {
        if self.true_beta.len() != levels + 1 {
            return Err(invalid(format!(
                "true_beta has {} entries, expected {}",
                self.true_beta.len(),
                levels + 1
            )));
        }
        if rows <= levels + 1 {
            return Err(invalid("need more rows than coefficients"));
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return Err(invalid("noise_sd must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.collinearity) {
            return Err(invalid("collinearity must lie in [0, 1)"));
        }
        Ok(())
    }
}

fn planted_rows(rng: &mut ChaCha8Rng, params: &PlantedParams, rows: usize, levels: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let shared = params.collinearity.sqrt();
    let own = (1.0 - params.collinearity).sqrt();
    let mut xs = Vec::with_capacity(rows);
    let mut ys = Vec::with_capacity(rows);
    for _ in 0..rows {
        let factor: f64 = rng.sample(StandardNormal);
        let row: Vec<f64> = (0..levels)
            .map(|_| shared * factor + own * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let noise: f64 = rng.sample(StandardNormal);
        let signal: f64 = params.true_beta[0] + row.iter().zip(&params.true_beta[1..]).map(|(x, b)| x * b).sum::<f64>();
        ys.push(signal + params.noise_sd * noise);
        xs.push(row);
    }
    (xs, ys)
}

/// Gaussian regressors with equicorrelation `collinearity` (one shared factor
/// plus idiosyncratic parts) and y = Xβ + ε.
pub fn generate_planted_regression(
    params: &PlantedParams,
    rows: usize,
    levels: usize,
) -> Result<(RegressionProblem, Vec<f64>), SynthError> {
    params.validate(rows, levels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (xs, ys) = planted_rows(&mut rng, params, rows, levels);
    Ok((RegressionProblem::from_rows("planted", 0, &xs, ys), params.true_beta.clone()))
}

/// `windows` independent planted problems drawn from one stream, numbered
/// 0..windows in time order.
pub fn generate_planted_windows(
    params: &PlantedParams,
    windows: usize,
    rows: usize,
    levels: usize,
) -> Result<Vec<RegressionProblem>, SynthError> {
    params.validate(rows, levels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    Ok((0..windows)
        .map(|w| {
            let (xs, ys) = planted_rows(&mut rng, params, rows, levels);
            RegressionProblem::from_rows("planted", w, &xs, ys)
        })
        .collect())
}

/// Writes a day as a LOBSTER message file plus its orderbook file with
/// `levels` levels. Returns (message path, orderbook path).
pub fn write_lobster_fixture(
    dir: &Path,
    ticker: &str,
    day: &DaySlice,
    session: &SessionConfig,
    levels: usize,
) -> io::Result<(PathBuf, PathBuf)> {
    let millis = |t: Timestamp| t.0 / 1_000_000;
    let stem = format!(
        "{ticker}_{}_{}_{}",
        day.date,
        millis(session.session_start),
        millis(session.session_end)
    );
    let message_path = dir.join(format!("{stem}_message_{levels}.csv"));
    let orderbook_path = dir.join(format!("{stem}_orderbook_{levels}.csv"));
    let mut book = day.seed.as_ref().map(BookState::from_snapshot).unwrap_or_default();
    let mut messages = String::new();
    let mut rows = String::new();
    for ev in &day.events {
        book.apply(ev).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
        messages.push_str(&format_message_line(ev));
        messages.push('\n');
        rows.push_str(&format_orderbook_row(&book.level_snapshot(levels)));
        rows.push('\n');
    }
    fs::create_dir_all(dir)?;
    fs::write(&message_path, messages)?;
    fs::write(&orderbook_path, rows)?;
    Ok((message_path, orderbook_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::fit_ols;

    fn short_session(secs: u64) -> SessionConfig {
        let start = Timestamp::from_hms(10, 0, 0);
        SessionConfig {
            session_start: start,
            session_end: Timestamp(start.0 + secs * Timestamp::NANOS_PER_SEC),
            ..SessionConfig::default()
        }
    }

    #[test]
    fn tiny_rates_give_a_short_valid_stream() {
        let params = ZiParams {
            limit_rate: 0.01,
            market_rate: 0.01,
            cancel_rate: 0.001,
            ..ZiParams::default()
        };
        let day = generate_zi_day(&params, &short_session(60), "2016-01-04").unwrap();
        assert!(day.events.len() < 40);
        let mut book = BookState::new();
        for ev in &day.events {
            book.apply(ev).unwrap();
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let s = short_session(600);
        let a = generate_zi_day(&ZiParams::default(), &s, "d").unwrap();
        let b = generate_zi_day(&ZiParams::default(), &s, "d").unwrap();
        assert_eq!(a, b);
        let c = generate_zi_day(&ZiParams { seed: 2, ..ZiParams::default() }, &s, "d").unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generator_book_matches_replayed_book() {
        let out = simulate_zi_day(&ZiParams::default(), &short_session(1800), "d", 3, 10).unwrap();
        let mut book = BookState::new();
        let opening = 2 * ZiParams::default().price_band;
        for (i, (ev, snap)) in out.day.events.iter().zip(&out.snapshots).enumerate() {
            book.apply(ev).unwrap();
            assert_eq!(&book.level_snapshot(10), snap);
            if i + 1 < opening {
                continue;
            }
            let (bid, ask) = (book.best_bid().unwrap(), book.best_ask().unwrap());
            assert!(bid.price < ask.price);
        }
    }

    #[test]
    fn invalid_params_are_rejected() {
        let s = short_session(60);
        for p in [
            ZiParams { limit_rate: 0.0, ..ZiParams::default() },
            ZiParams { mean_size: 0.5, ..ZiParams::default() },
            ZiParams { price_band: 0, ..ZiParams::default() },
        ] {
            assert!(generate_zi_day(&p, &s, "d").is_err());
        }
    }

    #[test]
    fn business_dates_skip_weekends() {
        let d = business_dates(NaiveDate::from_ymd_opt(2016, 1, 1).unwrap(), 3);
        assert_eq!(d, vec!["2016-01-01", "2016-01-04", "2016-01-05"]);
    }

    #[test]
    fn noiseless_planted_problem_is_recovered() {
        let params = PlantedParams {
            true_beta: vec![0.5, 1.0, -2.0, 0.25],
            noise_sd: 0.0,
            collinearity: 0.9,
            seed: 9,
        };
        let (p, beta) = generate_planted_regression(&params, 50, 3).unwrap();
        let fit = fit_ols(&p).unwrap();
        for (a, b) in fit.coeffs.iter().zip(&beta) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn planted_columns_hit_the_target_correlation() {
        let params = PlantedParams {
            true_beta: vec![0.0; 4],
            noise_sd: 1.0,
            collinearity: 0.6,
            seed: 10,
        };
        let (p, _) = generate_planted_regression(&params, 10_000, 3).unwrap();
        let d = crate::inference::diagnose_collinearity(&p).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!((d.corr[i][j].unwrap() - 0.6).abs() < 0.03);
                }
            }
        }
    }

    #[test]
    fn planted_params_are_checked() {
        let params = PlantedParams {
            true_beta: vec![0.0; 3],
            noise_sd: 1.0,
            collinearity: 1.0,
            seed: 0,
        };
        assert!(generate_planted_regression(&params, 100, 2).is_err());
        assert!(generate_planted_regression(&PlantedParams { collinearity: 0.5, ..params.clone() }, 100, 3).is_err());
        assert!(generate_planted_regression(&PlantedParams { collinearity: 0.5, ..params }, 3, 2).is_err());
    }
}
