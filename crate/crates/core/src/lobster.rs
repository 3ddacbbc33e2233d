//! LOBSTER message and orderbook files.
//!
//! Message rows are `time,type,order_id,size,price,direction` with time in
//! seconds after midnight and price in dollars × 10⁴. Orderbook rows list
//! `ask_p,ask_s,bid_p,bid_s` for each level and give the book immediately after
//! the message on the same line number.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{EventKind, LevelQuote, LevelSnapshot, LobEvent, Price, Side, Timestamp};

/// Empty-level sentinel prices used in LOBSTER orderbook files.
pub const EMPTY_ASK_PRICE: i64 = 9_999_999_999;
pub const EMPTY_BID_PRICE: i64 = -9_999_999_999;

#[derive(Debug, Error)]
pub enum LobsterError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("no events inside the session window")]
    EmptySession,
    #[error("invalid session window: {0}")]
    InvalidSession(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn malformed(line: usize, reason: impl Into<String>) -> LobsterError {
    LobsterError::MalformedRow {
        line,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub session_start: Timestamp,
    pub session_end: Timestamp,
    pub exclude_hidden: bool,
    /// Tick size in price units.
    pub tick: i64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            session_start: Timestamp::from_hms(10, 0, 0),
            session_end: Timestamp::from_hms(15, 30, 0),
            exclude_hidden: true,
            tick: 100,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), LobsterError> {
        let open = Timestamp::from_hms(9, 30, 0);
        let close = Timestamp::from_hms(16, 0, 0);
        if self.session_start >= self.session_end {
            return Err(LobsterError::InvalidSession(format!(
                "start {} is not before end {}",
                self.session_start, self.session_end
            )));
        }
        if self.session_start < open || self.session_end > close {
            return Err(LobsterError::InvalidSession(
                "window must lie within 09:30-16:00".into(),
            ));
        }
        if self.tick <= 0 {
            return Err(LobsterError::InvalidSession("tick must be positive".into()));
        }
        Ok(())
    }

    pub fn length_nanos(&self) -> u64 {
        self.session_end.0 - self.session_start.0
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        self.session_start <= t && t <= self.session_end
    }
}

/// One instrument-day restricted to the session window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DaySlice {
    pub date: String,
    pub events: Vec<LobEvent>,
    /// Book at the session start, when it was built by events before it.
    pub seed: Option<LevelSnapshot>,
}

pub fn event_kind_from_code(code: i64) -> Option<EventKind> {
    Some(match code {
        1 => EventKind::LimitArrival,
        2 => EventKind::PartialCancel,
        3 => EventKind::FullCancel,
        4 => EventKind::VisibleExecution,
        5 => EventKind::HiddenExecution,
        6 => EventKind::CrossTrade,
        7 => EventKind::Halt,
        _ => return None,
    })
}

pub fn event_kind_code(kind: EventKind) -> i64 {
    match kind {
        EventKind::LimitArrival => 1,
        EventKind::PartialCancel => 2,
        EventKind::FullCancel => 3,
        EventKind::VisibleExecution => 4,
        EventKind::HiddenExecution => 5,
        EventKind::CrossTrade => 6,
        EventKind::Halt => 7,
    }
}

/// Parses `seconds[.fraction]` with at most nine fractional digits.
pub fn parse_timestamp(field: &str) -> Option<Timestamp> {
    let (secs, frac) = match field.split_once('.') {
        Some((s, f)) => (s, f),
        None => (field, ""),
    };
    if secs.is_empty() || frac.len() > 9 {
        return None;
    }
    if !secs.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let secs: u64 = secs.parse().ok()?;
    let mut nanos: u64 = 0;
    for (i, digit) in frac.bytes().enumerate() {
        nanos += u64::from(digit - b'0') * 10u64.pow(8 - i as u32);
    }
    secs.checked_mul(Timestamp::NANOS_PER_SEC)?
        .checked_add(nanos)
        .map(Timestamp)
}

fn field<T: std::str::FromStr>(line: usize, name: &str, raw: &str) -> Result<T, LobsterError> {
    raw.trim()
        .parse()
        .map_err(|_| malformed(line, format!("bad {name} field {raw:?}")))
}

/// Parses one message row. `line` is only used for error reporting.
pub fn parse_message_line(text: &str, line: usize) -> Result<LobEvent, LobsterError> {
    let fields: Vec<&str> = text.trim_end().split(',').collect();
    if fields.len() != 6 {
        return Err(malformed(line, format!("expected 6 fields, found {}", fields.len())));
    }
    let time = parse_timestamp(fields[0].trim())
        .ok_or_else(|| malformed(line, format!("bad time field {:?}", fields[0])))?;
    let code: i64 = field(line, "type", fields[1])?;
    let kind = event_kind_from_code(code)
        .ok_or_else(|| malformed(line, format!("unknown event type {code}")))?;
    let order_id: i64 = field(line, "order id", fields[2])?;
    let size: i64 = field(line, "size", fields[3])?;
    let price: i64 = field(line, "price", fields[4])?;
    let direction: i64 = field(line, "direction", fields[5])?;
    let side = match direction {
        1 => Side::Buy,
        -1 => Side::Sell,
        d => return Err(malformed(line, format!("direction must be 1 or -1, found {d}"))),
    };
    if kind.is_order_bearing() && (size < 1 || price <= 0) {
        return Err(malformed(line, "order-bearing row needs size >= 1 and price > 0"));
    }
    if size < 0 {
        return Err(malformed(line, "negative size"));
    }
    Ok(LobEvent {
        time,
        kind,
        order_id,
        size: size as u64,
        price: Price(price),
        side,
    })
}

/// All rows of a message file, in order, with their 1-based line numbers.
pub fn parse_message_rows(text: &str) -> Result<Vec<(usize, LobEvent)>, LobsterError> {
    let mut rows = Vec::new();
    let mut last = Timestamp(0);
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let ev = parse_message_line(raw, line)?;
        if ev.time < last {
            return Err(malformed(line, "timestamp decreases"));
        }
        last = ev.time;
        rows.push((line, ev));
    }
    Ok(rows)
}

/// Applies the session window and hidden-order rules to parsed rows.
///
/// Returns the kept events and the position (in `rows`) of the last row that
/// precedes the session, whose orderbook row seeds the book.
fn select_session(
    rows: &[(usize, LobEvent)],
    config: &SessionConfig,
) -> (Vec<LobEvent>, Option<usize>) {
    let mut pre_session = None;
    let mut events = Vec::new();
    for (pos, (_, ev)) in rows.iter().enumerate() {
        if ev.time < config.session_start {
            pre_session = Some(pos);
            continue;
        }
        if ev.time > config.session_end {
            break;
        }
        if config.exclude_hidden && ev.kind == EventKind::HiddenExecution {
            continue;
        }
        events.push(*ev);
    }
    (events, pre_session)
}

/// Parses message-file text into a session slice without a seed.
pub fn parse_messages(text: &str, date: &str, config: &SessionConfig) -> Result<DaySlice, LobsterError> {
    config.validate()?;
    let rows = parse_message_rows(text)?;
    let (events, _) = select_session(&rows, config);
    if events.is_empty() {
        return Err(LobsterError::EmptySession);
    }
    Ok(DaySlice {
        date: date.to_string(),
        events,
        seed: None,
    })
}

fn read(path: &Path) -> Result<String, LobsterError> {
    fs::read_to_string(path).map_err(|source| LobsterError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Extracts a `YYYY-MM-DD` date from a LOBSTER file name, falling back to the
/// file stem.
pub fn date_from_path(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let bytes = name.as_bytes();
    let is_date = |w: &[u8]| {
        w.iter().enumerate().all(|(i, b)| match i {
            4 | 7 => *b == b'-',
            _ => b.is_ascii_digit(),
        })
    };
    if let Some(start) = bytes.windows(10).position(is_date) {
        return name[start..start + 10].to_string();
    }
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string()
}

pub fn parse_message_file(path: &Path, config: &SessionConfig) -> Result<DaySlice, LobsterError> {
    let text = read(path)?;
    parse_messages(&text, &date_from_path(path), config)
}

/// Parses a message file together with its orderbook file, seeding the book
/// from the orderbook row of the last pre-session message.
pub fn load_day(
    message_path: &Path,
    orderbook_path: &Path,
    levels: usize,
    config: &SessionConfig,
) -> Result<DaySlice, LobsterError> {
    config.validate()?;
    let rows = parse_message_rows(&read(message_path)?)?;
    let (events, pre_session) = select_session(&rows, config);
    if events.is_empty() {
        return Err(LobsterError::EmptySession);
    }
    let seed = match pre_session {
        Some(pos) => {
            let line = rows[pos].0;
            let book_text = read(orderbook_path)?;
            let row = book_text
                .lines()
                .nth(line - 1)
                .ok_or_else(|| malformed(line, "orderbook file has no matching row"))?;
            let available = row.split(',').count() / 4;
            Some(parse_orderbook_row(row, available.max(1), line)?.truncated(levels))
        }
        None => None,
    };
    Ok(DaySlice {
        date: date_from_path(message_path),
        events,
        seed,
    })
}

impl LevelSnapshot {
    /// Keeps the first `levels` entries per side, padding with absences.
    pub fn truncated(mut self, levels: usize) -> Self {
        self.bids.resize(levels, None);
        self.asks.resize(levels, None);
        self
    }
}

/// Parses one orderbook row with exactly `levels` levels.
pub fn parse_orderbook_row(text: &str, levels: usize, line: usize) -> Result<LevelSnapshot, LobsterError> {
    let fields: Vec<&str> = text.trim_end().split(',').collect();
    if levels == 0 || fields.len() != 4 * levels {
        return Err(malformed(
            line,
            format!("expected {} fields for {levels} levels, found {}", 4 * levels, fields.len()),
        ));
    }
    let mut snap = LevelSnapshot::empty(levels);
    for m in 0..levels {
        let nums: Vec<i64> = fields[4 * m..4 * m + 4]
            .iter()
            .map(|raw| field(line, "orderbook", raw))
            .collect::<Result<_, _>>()?;
        let quote = |price: i64, size: i64, sentinel: i64| -> Result<Option<LevelQuote>, LobsterError> {
            if price == sentinel || size == 0 {
                return Ok(None);
            }
            if price <= 0 || size < 0 {
                return Err(malformed(line, format!("invalid level {} quote", m + 1)));
            }
            Ok(Some(LevelQuote {
                price: Price(price),
                depth: size as u64,
            }))
        };
        snap.asks[m] = quote(nums[0], nums[1], EMPTY_ASK_PRICE)?;
        snap.bids[m] = quote(nums[2], nums[3], EMPTY_BID_PRICE)?;
    }
    Ok(snap)
}

pub fn format_message_line(ev: &LobEvent) -> String {
    let direction = match ev.side {
        Side::Buy => 1,
        Side::Sell => -1,
    };
    format!(
        "{},{},{},{},{},{}",
        ev.time,
        event_kind_code(ev.kind),
        ev.order_id,
        ev.size,
        ev.price,
        direction
    )
}

pub fn format_messages<'a>(events: impl IntoIterator<Item = &'a LobEvent>) -> String {
    let mut out = String::new();
    for ev in events {
        out.push_str(&format_message_line(ev));
        out.push('\n');
    }
    out
}

pub fn format_orderbook_row(snapshot: &LevelSnapshot) -> String {
    let mut out = String::new();
    for m in 0..snapshot.levels() {
        if m > 0 {
            out.push(',');
        }
        let (ap, asz) = snapshot.asks[m].map_or((EMPTY_ASK_PRICE, 0), |q| (q.price.0, q.depth));
        let (bp, bsz) = snapshot.bids[m].map_or((EMPTY_BID_PRICE, 0), |q| (q.price.0, q.depth));
        let _ = write!(out, "{ap},{asz},{bp},{bsz}");
    }
    out
}
