//! Per-event flow deltas and interval-level order-flow imbalance.
//!
//! For each event and each level m the bid-side contribution ΔWᵐ and the
//! ask-side contribution ΔVᵐ follow the price-comparison case table:
//!
//! | level-m price       | ΔWᵐ (bid)          | ΔVᵐ (ask)          |
//! |---------------------|--------------------|--------------------|
//! | rose                | rᵐ(after)          | −qᵐ(before)        |
//! | unchanged           | rᵐ(after)−rᵐ(before)| qᵐ(after)−qᵐ(before)|
//! | fell                | −rᵐ(before)        | qᵐ(after)          |
//!
//! and eᵐ = ΔWᵐ − ΔVᵐ. A missing bid level compares as −∞ and a missing ask
//! level as +∞, with depth zero.

use serde::{Deserialize, Serialize};

use crate::book::{BookState, LevelChange, LevelQuote, LevelSnapshot, MidQuote, Side, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowDelta {
    pub event_index: u64,
    pub delta_bid: Vec<i64>,
    pub delta_ask: Vec<i64>,
    pub e: Vec<i64>,
}

impl FlowDelta {
    pub fn zero(event_index: u64, levels: usize) -> Self {
        FlowDelta {
            event_index,
            delta_bid: vec![0; levels],
            delta_ask: vec![0; levels],
            e: vec![0; levels],
        }
    }

    fn from_sides(event_index: u64, delta_bid: Vec<i64>, delta_ask: Vec<i64>) -> Self {
        let e = delta_bid.iter().zip(&delta_ask).map(|(w, v)| w - v).collect();
        FlowDelta {
            event_index,
            delta_bid,
            delta_ask,
            e,
        }
    }

    pub fn levels(&self) -> usize {
        self.e.len()
    }
}

fn depth(q: LevelQuote) -> i64 {
    q.depth as i64
}

fn bid_delta(before: Option<LevelQuote>, after: Option<LevelQuote>) -> i64 {
    match (before, after) {
        (None, None) => 0,
        (None, Some(a)) => depth(a),
        (Some(b), None) => -depth(b),
        (Some(b), Some(a)) if a.price > b.price => depth(a),
        (Some(b), Some(a)) if a.price == b.price => depth(a) - depth(b),
        (Some(b), Some(_)) => -depth(b),
    }
}

fn ask_delta(before: Option<LevelQuote>, after: Option<LevelQuote>) -> i64 {
    match (before, after) {
        (None, None) => 0,
        (None, Some(a)) => depth(a),
        (Some(b), None) => -depth(b),
        (Some(b), Some(a)) if a.price > b.price => -depth(b),
        (Some(b), Some(a)) if a.price == b.price => depth(a) - depth(b),
        (Some(_), Some(a)) => depth(a),
    }
}

/// Flow delta of one event from the snapshots taken immediately before and
/// after it. Both snapshots must cover the same number of levels.
pub fn flow_delta(before: &LevelSnapshot, after: &LevelSnapshot, event_index: u64) -> FlowDelta {
    let levels = before.levels().min(after.levels());
    let delta_bid = (0..levels).map(|m| bid_delta(before.bids[m], after.bids[m])).collect();
    let delta_ask = (0..levels).map(|m| ask_delta(before.asks[m], after.asks[m])).collect();
    FlowDelta::from_sides(event_index, delta_bid, delta_ask)
}

/// Flow delta of one event computed from the single level it changed and the
/// post-event book, without snapshotting the pre-event book.
///
/// Inserting a level at rank j improves the price at every rank ≥ j on that
/// side; removing one worsens every rank ≥ j; a pure depth change only touches
/// rank j. The opposite side is untouched.
pub fn incremental_delta(
    after: &BookState,
    change: Option<&LevelChange>,
    levels: usize,
    event_index: u64,
) -> FlowDelta {
    let Some(change) = change else {
        return FlowDelta::zero(event_index, levels);
    };
    let mut side_delta = vec![0i64; levels];
    let j = change.rank;
    if j < levels {
        let post: Vec<i64> = after.levels(change.side).take(levels).map(depth).collect();
        let post_depth = |m: usize| post.get(m).copied().unwrap_or(0);
        let (before, now) = (change.before as i64, change.after as i64);
        // Same formulas on both sides: an inserted ask level is a lower ask
        // (ΔV = q after) and a removed one leaves a higher ask (ΔV = -q before).
        if before == 0 {
            side_delta[j] = now;
            for (m, d) in side_delta.iter_mut().enumerate().skip(j + 1) {
                *d = post_depth(m);
            }
        } else if now == 0 {
            side_delta[j] = -before;
            for (m, d) in side_delta.iter_mut().enumerate().skip(j + 1) {
                *d = -post_depth(m - 1);
            }
        } else {
            side_delta[j] = now - before;
        }
    }
    let zeros = vec![0i64; levels];
    match change.side {
        Side::Buy => FlowDelta::from_sides(event_index, side_delta, zeros),
        Side::Sell => FlowDelta::from_sides(event_index, zeros, side_delta),
    }
}

/// Best bid and ask, each possibly absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BestQuotes {
    pub bid: Option<LevelQuote>,
    pub ask: Option<LevelQuote>,
}

impl BestQuotes {
    pub fn of(book: &BookState) -> Self {
        BestQuotes {
            bid: book.best_bid(),
            ask: book.best_ask(),
        }
    }
}

/// Level-1 order-flow contribution eₙ of a single event, written directly
/// against best-quote prices with ∓∞ sentinels for empty sides.
pub fn ofi_event(before: BestQuotes, after: BestQuotes) -> i64 {
    let (b0, r0) = before.bid.map_or((i64::MIN, 0), |q| (q.price.0, q.depth as i64));
    let (b1, r1) = after.bid.map_or((i64::MIN, 0), |q| (q.price.0, q.depth as i64));
    let (a0, q0) = before.ask.map_or((i64::MAX, 0), |q| (q.price.0, q.depth as i64));
    let (a1, q1) = after.ask.map_or((i64::MAX, 0), |q| (q.price.0, q.depth as i64));

    let dw = if b1 > b0 {
        r1
    } else if b1 == b0 {
        r1 - r0
    } else {
        -r0
    };
    let dv = if a1 > a0 {
        -q0
    } else if a1 == a0 {
        q1 - q0
    } else {
        q1
    };
    dw - dv
}

/// Aggregated flow over one interval (t_{k-1}, t_k].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlofiSample {
    pub start: Timestamp,
    pub end: Timestamp,
    pub mlofi: Vec<i64>,
    /// Level-1 OFI accumulated from best quotes alone.
    pub ofi: i64,
    /// Buyer-initiated visible execution volume.
    pub buy_volume: u64,
    /// Seller-initiated visible execution volume.
    pub sell_volume: u64,
    /// P(t_k) − P(t_{k−1}) doubled, in price units.
    pub delta_p_twice: i64,
}

impl MlofiSample {
    pub fn trade_imbalance(&self) -> i64 {
        self.buy_volume as i64 - self.sell_volume as i64
    }

    /// ΔP expressed in ticks (0.5 resolution on a tick grid).
    pub fn delta_p_ticks(&self, tick: i64) -> f64 {
        self.delta_p_twice as f64 / (2 * tick) as f64
    }

    pub fn delta_p_half_ticks(&self, tick: i64) -> f64 {
        self.delta_p_twice as f64 / tick as f64
    }
}

/// OFI of a sample: the level-1 entry of its MLOFI vector.
pub fn ofi(sample: &MlofiSample) -> i64 {
    sample.mlofi[0]
}

/// Sums per-event deltas and signed trade volumes over one interval.
pub fn accumulate_interval<'a>(
    start: Timestamp,
    end: Timestamp,
    deltas: impl IntoIterator<Item = &'a FlowDelta>,
    trades: impl IntoIterator<Item = i64>,
    mid_before: MidQuote,
    mid_after: MidQuote,
    levels: usize,
) -> MlofiSample {
    let mut acc = IntervalAccumulator::new(levels);
    for delta in deltas {
        acc.add_delta(delta);
    }
    for volume in trades {
        acc.add_trade(volume);
    }
    let mut sample = acc.finish(start, end, mid_before, mid_after);
    sample.ofi = sample.mlofi[0];
    sample
}

/// Running sums for the interval currently being filled.
#[derive(Debug, Clone)]
pub struct IntervalAccumulator {
    mlofi: Vec<i64>,
    ofi: i64,
    buy_volume: u64,
    sell_volume: u64,
}

impl IntervalAccumulator {
    pub fn new(levels: usize) -> Self {
        IntervalAccumulator {
            mlofi: vec![0; levels],
            ofi: 0,
            buy_volume: 0,
            sell_volume: 0,
        }
    }

    pub fn add_delta(&mut self, delta: &FlowDelta) {
        for (acc, e) in self.mlofi.iter_mut().zip(&delta.e) {
            *acc += e;
        }
    }

    pub fn add_ofi(&mut self, e: i64) {
        self.ofi += e;
    }

    pub fn add_trade(&mut self, signed_volume: i64) {
        if signed_volume > 0 {
            self.buy_volume += signed_volume as u64;
        } else {
            self.sell_volume += signed_volume.unsigned_abs();
        }
    }

    pub fn finish(
        self,
        start: Timestamp,
        end: Timestamp,
        mid_before: MidQuote,
        mid_after: MidQuote,
    ) -> MlofiSample {
        MlofiSample {
            start,
            end,
            mlofi: self.mlofi,
            ofi: self.ofi,
            buy_volume: self.buy_volume,
            sell_volume: self.sell_volume,
            delta_p_twice: mid_after.mid_twice - mid_before.mid_twice,
        }
    }
}
