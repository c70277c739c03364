use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{EngineError, EngineWarning, OrderBook};
use crate::orderflow::{OrderEvent, SessionStream, Side};

/// Gap between the first and second occupied levels of one side, observed
/// right after an event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapObservation {
    pub event_index: u64,
    pub timestamp: i64,
    pub side: Side,
    /// `ln(b1/b2)` or `ln(a2/a1)`; zero when undefined.
    pub gap: f64,
    pub defined: bool,
    /// Integer tick distance between the two levels; zero when undefined.
    #[serde(default)]
    pub tick_diff: i64,
}

/// Event-indexed gap observations for one side of one instrument.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GapSeries {
    pub side: Option<Side>,
    pub observations: Vec<GapObservation>,
    /// Orders submitted on this side during the replay.
    pub submissions: u64,
    /// Sum over trading days of the first-to-last event span.
    pub observed_minutes: f64,
}

impl GapSeries {
    pub fn new(side: Side) -> Self {
        GapSeries { side: Some(side), ..Default::default() }
    }

    /// Defined gaps in event order. All downstream statistics use these only.
    pub fn defined_gaps(&self) -> Vec<f64> {
        self.observations.iter().filter(|o| o.defined).map(|o| o.gap).collect()
    }

    pub fn defined_count(&self) -> usize {
        self.observations.iter().filter(|o| o.defined).count()
    }

    /// Writes `event_index,timestamp,side,gap,defined`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(["event_index", "timestamp", "side", "gap", "defined"])?;
        for o in &self.observations {
            w.write_record([
                o.event_index.to_string(),
                crate::orderflow::format_timestamp(o.timestamp),
                o.side.as_str().to_string(),
                format!("{:e}", o.gap),
                u8::from(o.defined).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format produced by [`GapSeries::write_csv`]. Tick distances
    /// are not part of the file and come back as zero.
    pub fn read_csv<R: Read>(source: R) -> Result<GapSeries, String> {
        let mut r = csv::Reader::from_reader(source);
        let mut series = GapSeries::default();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| e.to_string())?;
            let line = i + 2;
            if rec.len() != 5 {
                return Err(format!("line {line}: expected 5 fields"));
            }
            let bad = |what: &str| format!("line {line}: bad {what}");
            let side = match &rec[2] {
                "buy" => Side::Buy,
                "sell" => Side::Sell,
                _ => return Err(bad("side")),
            };
            if *series.side.get_or_insert(side) != side {
                return Err(format!("line {line}: mixed sides in one gap file"));
            }
            let timestamp = match rec[1].split_once('.') {
                Some((s, c)) => s.parse::<i64>().ok().zip(c.parse::<i64>().ok()).map(|(s, c)| s * 100 + c),
                None => rec[1].parse::<i64>().ok().map(|s| s * 100),
            }
            .ok_or_else(|| bad("timestamp"))?;
            series.observations.push(GapObservation {
                event_index: rec[0].parse().map_err(|_| bad("event_index"))?,
                timestamp,
                side,
                gap: rec[3].parse().map_err(|_| bad("gap"))?,
                defined: match &rec[4] {
                    "1" | "true" => true,
                    "0" | "false" => false,
                    _ => return Err(bad("defined")),
                },
                tick_diff: 0,
            });
        }
        Ok(series)
    }
}

/// Output of replaying one or more trading days of one instrument.
#[derive(Debug, Clone, Default)]
pub struct Replay {
    pub buy: GapSeries,
    pub sell: GapSeries,
    pub fill_count: u64,
    pub warnings: Vec<(u64, EngineWarning)>,
}

impl Replay {
    pub fn side(&self, side: Side) -> &GapSeries {
        match side {
            Side::Buy => &self.buy,
            Side::Sell => &self.sell,
        }
    }
}

pub(crate) fn observe(book: &OrderBook, side: Side, event_index: u64, ev: &OrderEvent) -> GapObservation {
    let mut obs = GapObservation { event_index, timestamp: ev.timestamp, side, gap: 0.0, defined: false, tick_diff: 0 };
    if let Some((first, second)) = book.top_two(side) {
        let (hi, lo) = match side {
            Side::Buy => (first, second),
            Side::Sell => (second, first),
        };
        obs.gap = (hi as f64 / lo as f64).ln();
        obs.defined = true;
        obs.tick_diff = hi - lo;
    }
    obs
}

/// Replays one trading day and records both sides' gaps after every event.
pub fn extract_gap_series(stream: &SessionStream) -> Result<Replay, EngineError> {
    extract_gap_series_days(std::slice::from_ref(stream))
}

/// Replays consecutive trading days. The book is emptied at each day
/// boundary; event indices run on across days.
pub fn extract_gap_series_days(days: &[SessionStream]) -> Result<Replay, EngineError> {
    let mut out = Replay { buy: GapSeries::new(Side::Buy), sell: GapSeries::new(Side::Sell), ..Default::default() };
    let mut index = 0u64;
    for day in days {
        let mut book = OrderBook::new();
        for ev in &day.events {
            let applied = book.apply(ev)?;
            out.fill_count += applied.fills.len() as u64;
            if let Some(w) = applied.warning {
                log::warn!("{} {} event {index}: {w}", day.instrument, day.trading_day);
                out.warnings.push((index, w));
            }
            if ev.is_submit() {
                match ev.side {
                    Side::Buy => out.buy.submissions += 1,
                    Side::Sell => out.sell.submissions += 1,
                }
            }
            out.buy.observations.push(observe(&book, Side::Buy, index, ev));
            out.sell.observations.push(observe(&book, Side::Sell, index, ev));
            index += 1;
        }
        let minutes = day.span_minutes();
        out.buy.observed_minutes += minutes;
        out.sell.observed_minutes += minutes;
    }
    Ok(out)
}
