//! Limit order book reconstruction.
//!
//! The book aggregates visible resting orders into price levels and is
//! advanced one event at a time. All quantities are integers: prices use the
//! LOBSTER encoding (dollars × 10⁴) and depths are share counts, so replaying
//! the same stream always produces the same state.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Price in units of 10⁻⁴ dollars. One cent (one tick on Nasdaq) is 100 units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Price(pub i64);

impl Price {
    pub const fn units(self) -> i64 {
        self.0
    }
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Time of day in nanoseconds after midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const NANOS_PER_SEC: u64 = 1_000_000_000;

    pub const fn from_secs(secs: u64) -> Self {
        Timestamp(secs * Self::NANOS_PER_SEC)
    }

    pub const fn from_hms(h: u64, m: u64, s: u64) -> Self {
        Self::from_secs(h * 3600 + m * 60 + s)
    }

    pub const fn nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / Self::NANOS_PER_SEC as f64
    }
}

/// Formats as LOBSTER seconds-after-midnight with nanosecond precision.
impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}.{:09}",
            self.0 / Self::NANOS_PER_SEC,
            self.0 % Self::NANOS_PER_SEC
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Buy => Side::Sell,
            Side::Sell => Side::Buy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    LimitArrival,
    PartialCancel,
    FullCancel,
    VisibleExecution,
    HiddenExecution,
    CrossTrade,
    Halt,
}

impl EventKind {
    /// Kinds that carry a real order and therefore a positive size and price.
    pub fn is_order_bearing(self) -> bool {
        !matches!(self, EventKind::Halt)
    }
}

/// One row of an event stream.
///
/// `side` follows the LOBSTER convention: for arrivals and cancellations it is
/// the side of the order itself, for executions it is the side of the
/// *resting* order that was hit. A visible execution with `side == Sell` is
/// therefore a buyer-initiated trade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LobEvent {
    pub time: Timestamp,
    pub kind: EventKind,
    pub order_id: i64,
    pub size: u64,
    pub price: Price,
    pub side: Side,
}

impl LobEvent {
    /// Signed market-order volume: positive for buyer-initiated visible
    /// executions, negative for seller-initiated, zero otherwise.
    pub fn signed_trade_volume(&self) -> i64 {
        match (self.kind, self.side) {
            (EventKind::VisibleExecution, Side::Sell) => self.size as i64,
            (EventKind::VisibleExecution, Side::Buy) => -(self.size as i64),
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelQuote {
    pub price: Price,
    pub depth: u64,
}

/// Prices and depths of the first `M` populated levels on each side.
/// Index 0 is level 1; `None` marks a level that does not exist.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSnapshot {
    pub bids: Vec<Option<LevelQuote>>,
    pub asks: Vec<Option<LevelQuote>>,
}

impl LevelSnapshot {
    pub fn empty(levels: usize) -> Self {
        LevelSnapshot {
            bids: vec![None; levels],
            asks: vec![None; levels],
        }
    }

    pub fn levels(&self) -> usize {
        self.bids.len()
    }

    pub fn side(&self, side: Side) -> &[Option<LevelQuote>] {
        match side {
            Side::Buy => &self.bids,
            Side::Sell => &self.asks,
        }
    }
}

/// Mid-price and spread, kept exact by storing the mid doubled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MidQuote {
    /// a¹ + b¹ in price units, i.e. twice the mid-price.
    pub mid_twice: i64,
    pub spread: i64,
}

impl MidQuote {
    pub fn mid_price(&self) -> f64 {
        self.mid_twice as f64 / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Inconsistency {
    #[error("order id {0} is already resting")]
    DuplicateOrder(i64),
    #[error("limit order at {price} would cross the opposite best {best}")]
    CrossingLimit { price: Price, best: Price },
    #[error("no resting depth at {0} for an unknown order")]
    UnknownLevel(Price),
    #[error("size {requested} exceeds resting size {resting}")]
    ExceedsResting { requested: u64, resting: u64 },
    #[error("order {order_id} rests at {resting}, event names {named}")]
    PriceMismatch {
        order_id: i64,
        resting: Price,
        named: Price,
    },
    #[error("order {0} rests on the other side")]
    SideMismatch(i64),
    #[error("execution at {price} is not at the best quote {best:?}")]
    NotAtFront { price: Price, best: Option<Price> },
    #[error("order-bearing event with zero size or non-positive price")]
    InvalidOrderFields,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BookError {
    #[error("inconsistent event at index {index}: {reason}")]
    InconsistentEvent { index: u64, reason: Inconsistency },
    #[error("book is one-sided or empty")]
    OneSidedBook,
}

/// The visible effect of one event on one price level.
///
/// `before == 0` means the level was created, `after == 0` that it was
/// removed. `rank` is the 0-based level index of `price` in the book that
/// contains it (the post-event book for insertions and depth changes, the
/// pre-event book for removals).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelChange {
    pub side: Side,
    pub price: Price,
    pub rank: usize,
    pub before: u64,
    pub after: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct RestingOrder {
    side: Side,
    price: Price,
    remaining: u64,
}

/// Reconstructed visible book.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BookState {
    bids: BTreeMap<Price, u64>,
    asks: BTreeMap<Price, u64>,
    orders: HashMap<i64, RestingOrder>,
    event_seq: u64,
    // Deepest price present when the book was seeded from a snapshot.
    // Activity from unseen orders beyond it cannot be tracked.
    bid_horizon: Option<Price>,
    ask_horizon: Option<Price>,
    untracked: u64,
}

impl BookState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Seeds depths from a snapshot without order identities.
    pub fn from_snapshot(snapshot: &LevelSnapshot) -> Self {
        let mut book = BookState::new();
        for quote in snapshot.bids.iter().flatten() {
            book.bids.insert(quote.price, quote.depth);
        }
        for quote in snapshot.asks.iter().flatten() {
            book.asks.insert(quote.price, quote.depth);
        }
        book.bid_horizon = book.bids.keys().next().copied();
        book.ask_horizon = book.asks.keys().next_back().copied();
        book
    }

    pub fn event_seq(&self) -> u64 {
        self.event_seq
    }

    /// Events from unseen orders beyond the seeded horizon that were ignored.
    pub fn untracked_events(&self) -> u64 {
        self.untracked
    }

    pub fn best_bid(&self) -> Option<LevelQuote> {
        self.bids
            .iter()
            .next_back()
            .map(|(&price, &depth)| LevelQuote { price, depth })
    }

    pub fn best_ask(&self) -> Option<LevelQuote> {
        self.asks
            .iter()
            .next()
            .map(|(&price, &depth)| LevelQuote { price, depth })
    }

    /// Populated levels of one side, best first.
    pub fn levels(&self, side: Side) -> Box<dyn Iterator<Item = LevelQuote> + '_> {
        let quote = |(&price, &depth): (&Price, &u64)| LevelQuote { price, depth };
        match side {
            Side::Buy => Box::new(self.bids.iter().rev().map(quote)),
            Side::Sell => Box::new(self.asks.iter().map(quote)),
        }
    }

    pub fn depth_at(&self, side: Side, price: Price) -> u64 {
        self.side_map(side).get(&price).copied().unwrap_or(0)
    }

    pub fn level_count(&self, side: Side) -> usize {
        self.side_map(side).len()
    }

    pub fn level_snapshot(&self, levels: usize) -> LevelSnapshot {
        let take = |side| {
            let mut out: Vec<Option<LevelQuote>> = self.levels(side).take(levels).map(Some).collect();
            out.resize(levels, None);
            out
        };
        LevelSnapshot {
            bids: take(Side::Buy),
            asks: take(Side::Sell),
        }
    }

    pub fn mid_and_spread(&self) -> Result<MidQuote, BookError> {
        match (self.best_bid(), self.best_ask()) {
            (Some(bid), Some(ask)) => Ok(MidQuote {
                mid_twice: ask.price.0 + bid.price.0,
                spread: ask.price.0 - bid.price.0,
            }),
            _ => Err(BookError::OneSidedBook),
        }
    }

    /// Applies one event and returns the level it changed, if any.
    ///
    /// Validation happens before any mutation, so an error leaves the book
    /// untouched.
    pub fn apply(&mut self, ev: &LobEvent) -> Result<Option<LevelChange>, BookError> {
        let index = self.event_seq;
        let fail = |reason| BookError::InconsistentEvent { index, reason };
        if ev.kind.is_order_bearing() && (ev.size == 0 || ev.price.0 <= 0) {
            return Err(fail(Inconsistency::InvalidOrderFields));
        }
        let change = match ev.kind {
            EventKind::LimitArrival => self.add_limit(ev).map_err(fail)?,
            EventKind::PartialCancel | EventKind::FullCancel => {
                self.remove_volume(ev, false).map_err(fail)?
            }
            EventKind::VisibleExecution => self.remove_volume(ev, true).map_err(fail)?,
            EventKind::HiddenExecution | EventKind::CrossTrade | EventKind::Halt => None,
        };
        self.event_seq += 1;
        Ok(change)
    }

    fn side_map(&self, side: Side) -> &BTreeMap<Price, u64> {
        match side {
            Side::Buy => &self.bids,
            Side::Sell => &self.asks,
        }
    }

    fn side_map_mut(&mut self, side: Side) -> &mut BTreeMap<Price, u64> {
        match side {
            Side::Buy => &mut self.bids,
            Side::Sell => &mut self.asks,
        }
    }

    /// Number of populated levels strictly better than `price` on `side`.
    fn rank_of(&self, side: Side, price: Price) -> usize {
        match side {
            Side::Buy => self.bids.range((std::ops::Bound::Excluded(price), std::ops::Bound::Unbounded)).count(),
            Side::Sell => self.asks.range(..price).count(),
        }
    }

    fn add_limit(&mut self, ev: &LobEvent) -> Result<Option<LevelChange>, Inconsistency> {
        if self.orders.contains_key(&ev.order_id) {
            return Err(Inconsistency::DuplicateOrder(ev.order_id));
        }
        let crosses = match ev.side {
            Side::Buy => self.best_ask().filter(|a| ev.price >= a.price),
            Side::Sell => self.best_bid().filter(|b| ev.price <= b.price),
        };
        if let Some(best) = crosses {
            return Err(Inconsistency::CrossingLimit {
                price: ev.price,
                best: best.price,
            });
        }
        self.orders.insert(
            ev.order_id,
            RestingOrder {
                side: ev.side,
                price: ev.price,
                remaining: ev.size,
            },
        );
        let depth = self.side_map_mut(ev.side).entry(ev.price).or_insert(0);
        let before = *depth;
        *depth += ev.size;
        let after = *depth;
        Ok(Some(LevelChange {
            side: ev.side,
            price: ev.price,
            rank: self.rank_of(ev.side, ev.price),
            before,
            after,
        }))
    }

    /// Cancellations and visible executions: take `size` shares off a level.
    fn remove_volume(
        &mut self,
        ev: &LobEvent,
        execution: bool,
    ) -> Result<Option<LevelChange>, Inconsistency> {
        if execution {
            let best = match ev.side {
                Side::Buy => self.best_bid(),
                Side::Sell => self.best_ask(),
            };
            let at_front = best.is_some_and(|b| b.price == ev.price);
            let untracked = !at_front && self.orders.get(&ev.order_id).is_none() && self.beyond_horizon(ev.side, ev.price);
            if untracked {
                self.untracked += 1;
                return Ok(None);
            }
            if !at_front {
                return Err(Inconsistency::NotAtFront {
                    price: ev.price,
                    best: best.map(|b| b.price),
                });
            }
        }

        let removed = match self.orders.get(&ev.order_id).copied() {
            Some(order) => {
                if order.side != ev.side {
                    return Err(Inconsistency::SideMismatch(ev.order_id));
                }
                if order.price != ev.price {
                    return Err(Inconsistency::PriceMismatch {
                        order_id: ev.order_id,
                        resting: order.price,
                        named: ev.price,
                    });
                }
                if ev.size > order.remaining {
                    return Err(Inconsistency::ExceedsResting {
                        requested: ev.size,
                        resting: order.remaining,
                    });
                }
                let removed = if ev.kind == EventKind::FullCancel {
                    order.remaining
                } else {
                    ev.size
                };
                if removed == order.remaining {
                    self.orders.remove(&ev.order_id);
                } else if let Some(o) = self.orders.get_mut(&ev.order_id) {
                    o.remaining -= removed;
                }
                removed
            }
            None => {
                let resting = self.depth_at(ev.side, ev.price);
                if resting == 0 {
                    if self.beyond_horizon(ev.side, ev.price) {
                        self.untracked += 1;
                        return Ok(None);
                    }
                    return Err(Inconsistency::UnknownLevel(ev.price));
                }
                if ev.size > resting {
                    return Err(Inconsistency::ExceedsResting {
                        requested: ev.size,
                        resting,
                    });
                }
                ev.size
            }
        };

        let rank = self.rank_of(ev.side, ev.price);
        let map = self.side_map_mut(ev.side);
        let depth = map.get_mut(&ev.price).expect("resting order implies a level");
        let before = *depth;
        // Known orders are always backed by their level; seeded depth was checked above.
        if removed > before {
            return Err(Inconsistency::ExceedsResting {
                requested: removed,
                resting: before,
            });
        }
        *depth -= removed;
        let after = *depth;
        if after == 0 {
            map.remove(&ev.price);
        }
        Ok(Some(LevelChange {
            side: ev.side,
            price: ev.price,
            rank,
            before,
            after,
        }))
    }

    fn beyond_horizon(&self, side: Side, price: Price) -> bool {
        match side {
            Side::Buy => self.bid_horizon.is_some_and(|h| price < h),
            Side::Sell => self.ask_horizon.is_some_and(|h| price > h),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(kind: EventKind, id: i64, size: u64, price: i64, side: Side) -> LobEvent {
        LobEvent {
            time: Timestamp::from_hms(10, 0, 1),
            kind,
            order_id: id,
            size,
            price: Price(price),
            side,
        }
    }

    fn limit(id: i64, size: u64, price: i64, side: Side) -> LobEvent {
        ev(EventKind::LimitArrival, id, size, price, side)
    }

    fn worked_example_book() -> BookState {
        let mut book = BookState::new();
        book.apply(&limit(1, 10, 14_000, Side::Buy)).unwrap();
        book.apply(&limit(2, 10, 13_900, Side::Buy)).unwrap();
        book
    }

    fn bid_pairs(book: &BookState) -> Vec<(i64, u64)> {
        book.levels(Side::Buy).map(|q| (q.price.0, q.depth)).collect()
    }

    #[test]
    fn first_order_into_empty_book() {
        let mut book = BookState::new();
        book.apply(&limit(1, 10, 140_000, Side::Buy)).unwrap();
        assert_eq!(bid_pairs(&book), vec![(140_000, 10)]);
        assert_eq!(book.event_seq(), 1);
    }

    #[test]
    fn arrival_above_best_bid_becomes_level_one() {
        // $1.40 x10 and $1.39 x10, then a buy at $1.41 x7.
        let mut book = BookState::new();
        book.apply(&limit(1, 10, 14_000, Side::Buy)).unwrap();
        book.apply(&limit(2, 10, 13_900, Side::Buy)).unwrap();
        let change = book.apply(&limit(3, 7, 14_100, Side::Buy)).unwrap().unwrap();
        assert_eq!(bid_pairs(&book), vec![(14_100, 7), (14_000, 10), (13_900, 10)]);
        assert_eq!(change.rank, 0);
        assert_eq!((change.before, change.after), (0, 7));
    }

    #[test]
    fn execution_consumes_ask_level() {
        let mut book = worked_example_book();
        book.apply(&limit(9, 5, 14_100, Side::Sell)).unwrap();
        let bids = bid_pairs(&book);
        let change = book
            .apply(&ev(EventKind::VisibleExecution, 9, 5, 14_100, Side::Sell))
            .unwrap()
            .unwrap();
        assert_eq!(book.level_count(Side::Sell), 0);
        assert_eq!(bid_pairs(&book), bids);
        assert_eq!((change.before, change.after), (5, 0));
    }

    #[test]
    fn snapshot_pads_absent_levels() {
        let empty = BookState::new().level_snapshot(2);
        assert_eq!(empty, LevelSnapshot::empty(2));

        let mut book = BookState::new();
        for (i, p) in [100, 99, 98, 97].iter().enumerate() {
            book.apply(&limit(i as i64, 1, p * 100, Side::Buy)).unwrap();
        }
        let snap = book.level_snapshot(10);
        assert!(snap.bids[..4].iter().all(Option::is_some));
        assert!(snap.bids[4..].iter().all(Option::is_none));
        assert!(snap.asks.iter().all(Option::is_none));
    }

    #[test]
    fn mid_and_spread_examples() {
        let mut book = BookState::new();
        book.apply(&limit(1, 1, 139_000, Side::Buy)).unwrap();
        book.apply(&limit(2, 1, 141_000, Side::Sell)).unwrap();
        let q = book.mid_and_spread().unwrap();
        assert_eq!(q.mid_price(), 140_000.0);
        assert_eq!(q.spread, 2_000);

        let mut book = BookState::new();
        book.apply(&limit(1, 1, 140_000, Side::Buy)).unwrap();
        book.apply(&limit(2, 1, 140_100, Side::Sell)).unwrap();
        let q = book.mid_and_spread().unwrap();
        assert_eq!(q.mid_twice, 280_100);
        assert_eq!(q.mid_price(), 140_050.0);
        assert_eq!(q.spread, 100);

        // Post-event worked-example book with an ask at $14.20.
        let mut book = BookState::new();
        book.apply(&limit(1, 10, 140_000, Side::Buy)).unwrap();
        book.apply(&limit(2, 10, 139_000, Side::Buy)).unwrap();
        book.apply(&limit(3, 7, 141_000, Side::Buy)).unwrap();
        book.apply(&limit(4, 5, 142_000, Side::Sell)).unwrap();
        assert_eq!(book.mid_and_spread().unwrap().mid_price(), 141_500.0);
    }

    #[test]
    fn one_sided_book_has_no_mid() {
        assert_eq!(BookState::new().mid_and_spread(), Err(BookError::OneSidedBook));
        let book = worked_example_book();
        assert_eq!(book.mid_and_spread(), Err(BookError::OneSidedBook));
    }

    #[test]
    fn hidden_cross_and_halt_only_advance_the_sequence() {
        let mut book = worked_example_book();
        let before = book.level_snapshot(5);
        for kind in [EventKind::HiddenExecution, EventKind::CrossTrade] {
            assert_eq!(book.apply(&ev(kind, 77, 3, 14_000, Side::Buy)).unwrap(), None);
        }
        assert_eq!(book.apply(&ev(EventKind::Halt, 0, 0, -1, Side::Buy)).unwrap(), None);
        assert_eq!(book.level_snapshot(5), before);
        assert_eq!(book.event_seq(), 5);
    }

    #[test]
    fn cancellation_exceeding_depth_is_rejected_with_index() {
        let mut book = worked_example_book();
        let err = book
            .apply(&ev(EventKind::PartialCancel, 1, 11, 14_000, Side::Buy))
            .unwrap_err();
        assert_eq!(
            err,
            BookError::InconsistentEvent {
                index: 2,
                reason: Inconsistency::ExceedsResting {
                    requested: 11,
                    resting: 10
                }
            }
        );
        // Nothing changed.
        assert_eq!(bid_pairs(&book), vec![(14_000, 10), (13_900, 10)]);
    }

    #[test]
    fn execution_behind_the_front_is_rejected() {
        let mut book = worked_example_book();
        let err = book
            .apply(&ev(EventKind::VisibleExecution, 2, 1, 13_900, Side::Buy))
            .unwrap_err();
        assert!(matches!(
            err,
            BookError::InconsistentEvent {
                reason: Inconsistency::NotAtFront { .. },
                ..
            }
        ));
    }

    #[test]
    fn crossing_limit_and_duplicate_id_are_rejected() {
        let mut book = worked_example_book();
        book.apply(&limit(5, 1, 14_200, Side::Sell)).unwrap();
        assert!(book.apply(&limit(6, 1, 14_000, Side::Sell)).is_err());
        assert!(book.apply(&limit(1, 1, 13_000, Side::Buy)).is_err());
    }

    #[test]
    fn seeded_book_decrements_unseen_orders() {
        let snap = LevelSnapshot {
            bids: vec![
                Some(LevelQuote { price: Price(14_000), depth: 30 }),
                Some(LevelQuote { price: Price(13_900), depth: 5 }),
            ],
            asks: vec![Some(LevelQuote { price: Price(14_100), depth: 8 }), None],
        };
        let mut book = BookState::from_snapshot(&snap);
        book.apply(&ev(EventKind::PartialCancel, 500, 10, 14_000, Side::Buy)).unwrap();
        assert_eq!(book.depth_at(Side::Buy, Price(14_000)), 20);
        book.apply(&ev(EventKind::VisibleExecution, 501, 8, 14_100, Side::Sell)).unwrap();
        assert_eq!(book.level_count(Side::Sell), 0);
        // Unknown level inside the seeded range is corrupt input.
        assert!(book.apply(&ev(EventKind::FullCancel, 502, 1, 13_950, Side::Buy)).is_err());
        // Beyond the seeded horizon it cannot be tracked and is skipped.
        assert_eq!(
            book.apply(&ev(EventKind::FullCancel, 503, 1, 13_000, Side::Buy)).unwrap(),
            None
        );
        assert_eq!(book.untracked_events(), 1);
        // Too much from seeded depth.
        assert!(book.apply(&ev(EventKind::PartialCancel, 504, 6, 13_900, Side::Buy)).is_err());
    }

    #[test]
    fn full_cancel_of_known_order_removes_remaining() {
        let mut book = worked_example_book();
        book.apply(&ev(EventKind::PartialCancel, 1, 4, 14_000, Side::Buy)).unwrap();
        let change = book
            .apply(&ev(EventKind::FullCancel, 1, 6, 14_000, Side::Buy))
            .unwrap()
            .unwrap();
        assert_eq!((change.before, change.after, change.rank), (6, 0, 0));
        assert_eq!(bid_pairs(&book), vec![(13_900, 10)]);
    }

    #[test]
    fn timestamp_formats_like_lobster() {
        let t = Timestamp(34_200_189_000_000);
        assert_eq!(t.to_string(), "34200.189000000");
        assert_eq!(Timestamp::from_hms(10, 0, 0), Timestamp::from_secs(36_000));
    }
}
