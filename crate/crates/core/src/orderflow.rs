//! Order-flow event files.
//!
//! One CSV file holds the continuous-auction events of one instrument on one
//! trading day:
//!
//! ```text
//! timestamp,order_id,side,price,quantity,kind
//! 34200.00,17,B,9.99,500,S
//! 34200.03,17,B,0,0,C
//! ```
//!
//! `timestamp` is seconds since midnight with exactly two fractional digits,
//! `side` is `B`/`S`, `kind` is `S` (submit) or `C` (cancel). Cancel rows carry
//! zero price and quantity; both are ignored. Prices are converted to integer
//! ticks by exact decimal scaling, so no floating-point price ever reaches the
//! matching engine.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HEADER: [&str; 6] = ["timestamp", "order_id", "side", "price", "quantity", "kind"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
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

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Buy => "buy",
            Side::Sell => "sell",
        }
    }

    fn code(self) -> &'static str {
        match self {
            Side::Buy => "B",
            Side::Sell => "S",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Submit,
    Cancel,
}

/// One submission or cancellation.
///
/// `timestamp` is in centiseconds, `price` in integer ticks. Cancels carry
/// `price == 0` and `quantity == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OrderEvent {
    pub timestamp: i64,
    pub order_id: u64,
    pub side: Side,
    pub price: i64,
    pub quantity: u64,
    pub kind: EventKind,
}

impl OrderEvent {
    pub fn submit(timestamp: i64, order_id: u64, side: Side, price: i64, quantity: u64) -> Self {
        OrderEvent { timestamp, order_id, side, price, quantity, kind: EventKind::Submit }
    }

    pub fn cancel(timestamp: i64, order_id: u64, side: Side) -> Self {
        OrderEvent { timestamp, order_id, side, price: 0, quantity: 0, kind: EventKind::Cancel }
    }

    pub fn is_submit(&self) -> bool {
        self.kind == EventKind::Submit
    }
}

/// Continuous-auction events of one instrument on one trading day, in
/// arrival order (timestamp, then file order).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionStream {
    pub instrument: String,
    pub trading_day: String,
    pub events: Vec<OrderEvent>,
}

impl SessionStream {
    pub fn new(instrument: impl Into<String>, trading_day: impl Into<String>) -> Self {
        SessionStream { instrument: instrument.into(), trading_day: trading_day.into(), events: Vec::new() }
    }

    /// Minutes between the first and last event.
    pub fn span_minutes(&self) -> f64 {
        match (self.events.first(), self.events.last()) {
            (Some(a), Some(b)) => (b.timestamp - a.timestamp) as f64 / 6000.0,
            _ => 0.0,
        }
    }
}

/// Exact decimal tick size, e.g. `0.01` is stored as `1 * 10^-2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TickSize {
    mantissa: i64,
    scale: u32,
}

impl TickSize {
    pub fn new(mantissa: i64, scale: u32) -> Result<Self, TickError> {
        if mantissa <= 0 || scale > 12 {
            return Err(TickError::NotPositive);
        }
        Ok(TickSize { mantissa, scale })
    }

    /// Value in currency units. Only used for display and log-free summaries.
    pub fn as_f64(&self) -> f64 {
        self.mantissa as f64 / 10f64.powi(self.scale as i32)
    }

    /// Converts a decimal price string to integer ticks, rejecting prices that
    /// are not an exact multiple of the tick.
    pub fn to_ticks(&self, price: &str) -> Result<i64, TickError> {
        let (m, s) = parse_decimal(price).ok_or(TickError::NotDecimal)?;
        // price = m / 10^s, tick = t / 10^u  =>  ticks = m * 10^u / (t * 10^s)
        let num = m.checked_mul(pow10(self.scale)?).ok_or(TickError::Overflow)?;
        let den = (self.mantissa as i128).checked_mul(pow10(s)?).ok_or(TickError::Overflow)?;
        if num % den != 0 {
            return Err(TickError::NotOnTick);
        }
        i64::try_from(num / den).map_err(|_| TickError::Overflow)
    }

    /// Formats integer ticks back into a decimal price with `scale` digits.
    pub fn format(&self, ticks: i64) -> String {
        let raw = ticks as i128 * self.mantissa as i128;
        if self.scale == 0 {
            return raw.to_string();
        }
        let div = 10i128.pow(self.scale);
        let sign = if raw < 0 { "-" } else { "" };
        let raw = raw.abs();
        format!("{sign}{}.{:0width$}", raw / div, raw % div, width = self.scale as usize)
    }
}

impl Default for TickSize {
    fn default() -> Self {
        TickSize { mantissa: 1, scale: 2 }
    }
}

impl FromStr for TickSize {
    type Err = TickError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (m, scale) = parse_decimal(s).ok_or(TickError::NotDecimal)?;
        let m = i64::try_from(m).map_err(|_| TickError::Overflow)?;
        TickSize::new(m, scale)
    }
}

impl TryFrom<String> for TickSize {
    type Error = TickError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<TickSize> for String {
    fn from(t: TickSize) -> String {
        t.to_string()
    }
}

impl fmt::Display for TickSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&TickSize { mantissa: 1, scale: self.scale }.format(self.mantissa))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TickError {
    #[error("not a plain decimal number")]
    NotDecimal,
    #[error("tick size must be positive")]
    NotPositive,
    #[error("price is not a multiple of the tick size")]
    NotOnTick,
    #[error("numeric overflow")]
    Overflow,
}

fn pow10(e: u32) -> Result<i128, TickError> {
    10i128.checked_pow(e).ok_or(TickError::Overflow)
}

/// Parses an unsigned decimal like `9.99` into `(999, 2)`.
fn parse_decimal(s: &str) -> Option<(i128, u32)> {
    let (int, frac) = match s.split_once('.') {
        Some((i, f)) => (i, f),
        None => (s, ""),
    };
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if int.len() + frac.len() > 30 {
        return None;
    }
    let digits = format!("{int}{frac}");
    let mantissa = if digits.is_empty() { 0 } else { digits.parse::<i128>().ok()? };
    Some((mantissa, frac.len() as u32))
}

#[derive(Debug, Error)]
pub enum OrderFlowError {
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: timestamp {timestamp} precedes the previous event")]
    NonMonotoneTimestamp { line: u64, timestamp: String },
    #[error("line {line}: cancel of order {order_id}, which is not live")]
    UnknownCancelTarget { line: u64, order_id: u64 },
    #[error("line {line}: cancel of order {order_id} on the wrong side")]
    CancelSideMismatch { line: u64, order_id: u64 },
    #[error("line {line}: order id {order_id} submitted twice")]
    DuplicateOrderId { line: u64, order_id: u64 },
    #[error("line {line}: price {price} is not on the tick grid")]
    PriceNotOnTick { line: u64, price: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl OrderFlowError {
    pub fn line(&self) -> Option<u64> {
        match self {
            OrderFlowError::MalformedRow { line, .. }
            | OrderFlowError::NonMonotoneTimestamp { line, .. }
            | OrderFlowError::UnknownCancelTarget { line, .. }
            | OrderFlowError::CancelSideMismatch { line, .. }
            | OrderFlowError::DuplicateOrderId { line, .. }
            | OrderFlowError::PriceNotOnTick { line, .. } => Some(*line),
            _ => None,
        }
    }
}

fn malformed(line: u64, reason: impl Into<String>) -> OrderFlowError {
    OrderFlowError::MalformedRow { line, reason: reason.into() }
}

fn parse_timestamp(s: &str) -> Option<i64> {
    let (secs, frac) = s.split_once('.')?;
    if secs.is_empty() || frac.len() != 2 {
        return None;
    }
    if !secs.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let secs: i64 = secs.parse().ok()?;
    let frac: i64 = frac.parse().ok()?;
    secs.checked_mul(100)?.checked_add(frac)
}

pub fn format_timestamp(centis: i64) -> String {
    format!("{}.{:02}", centis / 100, centis % 100)
}

/// Parses and validates one order-flow file.
///
/// Validation covers field syntax, non-decreasing timestamps, tick alignment,
/// unique order ids and that every cancel targets a submitted order on the
/// same side that has not already been cancelled. Whether the target was
/// already filled is only known to the matching engine.
pub fn parse_order_flow<R: Read>(
    source: R,
    tick: TickSize,
    instrument: &str,
    trading_day: &str,
) -> Result<SessionStream, OrderFlowError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::None)
        .from_reader(source);
    let mut stream = SessionStream::new(instrument, trading_day);
    let mut seen: HashSet<u64> = HashSet::new();
    // live submissions: id -> side
    let mut live: std::collections::HashMap<u64, Side> = std::collections::HashMap::new();
    let mut last_ts = i64::MIN;
    let mut header_done = false;

    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        if !header_done {
            header_done = true;
            if record.iter().ne(HEADER.iter().copied()) {
                return Err(malformed(line, format!("expected header `{}`", HEADER.join(","))));
            }
            continue;
        }
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != HEADER.len() {
            return Err(malformed(line, format!("expected 6 fields, found {}", record.len())));
        }
        let timestamp = parse_timestamp(&record[0])
            .ok_or_else(|| malformed(line, format!("bad timestamp `{}`", &record[0])))?;
        let order_id: u64 = record[1]
            .parse()
            .ok()
            .filter(|&id| id > 0)
            .ok_or_else(|| malformed(line, format!("bad order id `{}`", &record[1])))?;
        let side = match &record[2] {
            "B" => Side::Buy,
            "S" => Side::Sell,
            other => return Err(malformed(line, format!("bad side `{other}`"))),
        };
        let kind = match &record[5] {
            "S" => EventKind::Submit,
            "C" => EventKind::Cancel,
            other => return Err(malformed(line, format!("bad kind `{other}`"))),
        };
        if timestamp < last_ts {
            return Err(OrderFlowError::NonMonotoneTimestamp { line, timestamp: record[0].to_string() });
        }
        last_ts = timestamp;

        let event = match kind {
            EventKind::Submit => {
                let price = tick.to_ticks(&record[3]).map_err(|e| match e {
                    TickError::NotOnTick => OrderFlowError::PriceNotOnTick { line, price: record[3].to_string() },
                    _ => malformed(line, format!("bad price `{}`", &record[3])),
                })?;
                let quantity: u64 = record[4]
                    .parse()
                    .map_err(|_| malformed(line, format!("bad quantity `{}`", &record[4])))?;
                if price <= 0 || quantity == 0 {
                    return Err(malformed(line, "submit requires positive price and quantity"));
                }
                if !seen.insert(order_id) {
                    return Err(OrderFlowError::DuplicateOrderId { line, order_id });
                }
                live.insert(order_id, side);
                OrderEvent::submit(timestamp, order_id, side, price, quantity)
            }
            EventKind::Cancel => {
                match live.remove(&order_id) {
                    None => return Err(OrderFlowError::UnknownCancelTarget { line, order_id }),
                    Some(s) if s != side => return Err(OrderFlowError::CancelSideMismatch { line, order_id }),
                    Some(_) => {}
                }
                OrderEvent::cancel(timestamp, order_id, side)
            }
        };
        stream.events.push(event);
    }
    Ok(stream)
}

/// Writes a stream in the order-flow CSV format.
pub fn write_order_flow<W: Write>(stream: &SessionStream, tick: TickSize, out: W) -> Result<(), OrderFlowError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(HEADER)?;
    for e in &stream.events {
        let (price, qty) = match e.kind {
            EventKind::Submit => (tick.format(e.price), e.quantity.to_string()),
            EventKind::Cancel => ("0".to_string(), "0".to_string()),
        };
        let kind = match e.kind {
            EventKind::Submit => "S",
            EventKind::Cancel => "C",
        };
        w.write_record([
            format_timestamp(e.timestamp).as_str(),
            &e.order_id.to_string(),
            e.side.code(),
            &price,
            &qty,
            kind,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Splits a file stem of the form `<instrument>_<day>` into its parts.
pub fn session_key(path: &Path) -> Option<(String, String)> {
    let stem = path.file_stem()?.to_str()?;
    let (inst, day) = stem.rsplit_once('_')?;
    if inst.is_empty() || day.is_empty() {
        return None;
    }
    Some((inst.to_string(), day.to_string()))
}

/// Reads `<instrument>_<day>.csv`.
pub fn read_session_file(path: &Path, tick: TickSize) -> Result<SessionStream, OrderFlowError> {
    let (inst, day) = session_key(path).unwrap_or_else(|| {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("unknown");
        (stem.to_string(), String::new())
    });
    let file = std::fs::File::open(path)?;
    parse_order_flow(std::io::BufReader::new(file), tick, &inst, &day)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<SessionStream, OrderFlowError> {
        parse_order_flow(text.as_bytes(), TickSize::default(), "000001", "20030102")
    }

    #[test]
    fn parses_submit_row() {
        let s = parse("timestamp,order_id,side,price,quantity,kind\n34200.00,17,B,9.99,500,S\n").unwrap();
        assert_eq!(s.events, vec![OrderEvent::submit(3_420_000, 17, Side::Buy, 999, 500)]);
    }

    #[test]
    fn empty_file_is_empty_stream() {
        assert!(parse("").unwrap().events.is_empty());
        assert!(parse("timestamp,order_id,side,price,quantity,kind\n").unwrap().events.is_empty());
    }

    #[test]
    fn cancel_of_unknown_id_reports_line() {
        let err = parse("timestamp,order_id,side,price,quantity,kind\n34200.00,1,B,9.99,5,S\n34200.01,2,B,0,0,C\n")
            .unwrap_err();
        assert!(matches!(err, OrderFlowError::UnknownCancelTarget { line: 3, order_id: 2 }), "{err}");
    }

    #[test]
    fn rejects_bad_rows() {
        let h = "timestamp,order_id,side,price,quantity,kind\n";
        let cases = [
            ("34200.0,1,B,9.99,5,S\n", "timestamp digits"),
            ("34200.00,1,X,9.99,5,S\n", "side"),
            ("34200.00,1,B,9.99,5\n", "field count"),
            ("34200.00,1,B,9.99,0,S\n", "zero qty"),
            ("34200.00,0,B,9.99,5,S\n", "zero id"),
            ("34200.00,1,B,-9.99,5,S\n", "negative price"),
        ];
        for (row, what) in cases {
            let err = parse(&format!("{h}{row}")).unwrap_err();
            assert!(matches!(err, OrderFlowError::MalformedRow { line: 2, .. }), "{what}: {err}");
        }
    }

    #[test]
    fn rejects_missing_header() {
        assert!(matches!(parse("34200.00,1,B,9.99,5,S\n"), Err(OrderFlowError::MalformedRow { line: 1, .. })));
    }

    #[test]
    fn rejects_off_tick_price() {
        let err = parse("timestamp,order_id,side,price,quantity,kind\n34200.00,1,B,9.995,5,S\n").unwrap_err();
        assert!(matches!(err, OrderFlowError::PriceNotOnTick { line: 2, .. }));
    }

    #[test]
    fn rejects_time_going_backwards() {
        let err = parse("timestamp,order_id,side,price,quantity,kind\n34200.05,1,B,9.99,5,S\n34200.04,2,B,9.99,5,S\n")
            .unwrap_err();
        assert!(matches!(err, OrderFlowError::NonMonotoneTimestamp { line: 3, .. }));
    }

    #[test]
    fn rejects_cancel_side_mismatch_and_double_cancel() {
        let h = "timestamp,order_id,side,price,quantity,kind\n34200.00,1,B,9.99,5,S\n";
        let err = parse(&format!("{h}34200.00,1,S,0,0,C\n")).unwrap_err();
        assert!(matches!(err, OrderFlowError::CancelSideMismatch { line: 3, .. }));
        let err = parse(&format!("{h}34200.00,1,B,0,0,C\n34200.00,1,B,0,0,C\n")).unwrap_err();
        assert!(matches!(err, OrderFlowError::UnknownCancelTarget { line: 4, .. }));
        let err = parse(&format!("{h}34200.00,1,B,9.98,5,S\n")).unwrap_err();
        assert!(matches!(err, OrderFlowError::DuplicateOrderId { line: 3, .. }));
    }

    #[test]
    fn equal_timestamps_keep_file_order() {
        let s = parse(
            "timestamp,order_id,side,price,quantity,kind\n34200.00,5,B,9.99,5,S\n34200.00,3,S,10.01,5,S\n",
        )
        .unwrap();
        assert_eq!(s.events.iter().map(|e| e.order_id).collect::<Vec<_>>(), vec![5, 3]);
    }

    #[test]
    fn tick_sizes() {
        let t: TickSize = "0.05".parse().unwrap();
        assert_eq!(t.to_ticks("10.05"), Ok(201));
        assert_eq!(t.to_ticks("10.07"), Err(TickError::NotOnTick));
        assert_eq!(t.format(201), "10.05");
        assert_eq!(t.to_string(), "0.05");
        assert_eq!(TickSize::default().to_ticks("10"), Ok(1000));
        assert_eq!(TickSize::default().to_ticks("10.1"), Ok(1010));
        assert_eq!(TickSize::default().to_ticks("10.100"), Ok(1010));
        assert!("0".parse::<TickSize>().is_err());
        assert!("abc".parse::<TickSize>().is_err());
    }

    #[test]
    fn session_key_from_file_name() {
        assert_eq!(
            session_key(Path::new("data/000016_20030102.csv")),
            Some(("000016".to_string(), "20030102".to_string()))
        );
        assert_eq!(session_key(Path::new("plain.csv")), None);
    }

    proptest! {
        #[test]
        fn tick_scaling_is_exact(ticks in 1i64..10_000_000, scale in 0u32..4, m in 1i64..50) {
            let tick = TickSize::new(m, scale).unwrap();
            prop_assert_eq!(tick.to_ticks(&tick.format(ticks)), Ok(ticks));
        }

        #[test]
        fn write_then_parse_round_trips(rows in proptest::collection::vec((0i64..500, 1i64..5000, 1u64..10_000, any::<bool>()), 0..60)) {
            let mut stream = SessionStream::new("X", "D");
            let mut t = 3_420_000i64;
            for (i, (dt, price, qty, buy)) in rows.into_iter().enumerate() {
                t += dt;
                let side = if buy { Side::Buy } else { Side::Sell };
                stream.events.push(OrderEvent::submit(t, i as u64 + 1, side, price, qty));
                if i % 3 == 2 {
                    stream.events.push(OrderEvent::cancel(t, i as u64 + 1, side));
                }
            }
            let mut buf = Vec::new();
            write_order_flow(&stream, TickSize::default(), &mut buf).unwrap();
            let back = parse_order_flow(buf.as_slice(), TickSize::default(), "X", "D").unwrap();
            prop_assert_eq!(back, stream);
        }
    }
}
