//! Price-time-priority continuous double auction.
//!
//! The book keeps one FIFO queue per occupied integer-tick price level. An
//! incoming limit order first trades against the opposite side while it
//! crosses (best price first, oldest order first within a level, at the
//! resting order's price); any remainder rests at its own limit price behind
//! everything already queued there.

mod gaps;
mod summary;

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orderflow::{EventKind, OrderEvent, Side};

pub use gaps::{extract_gap_series, extract_gap_series_days, GapObservation, GapSeries, Replay};
pub use summary::{summarize_gaps, GapSummary, SummaryError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fill {
    pub taker_id: u64,
    pub maker_id: u64,
    pub taker_side: Side,
    pub price: i64,
    pub quantity: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestingOrder {
    pub order_id: u64,
    pub remaining: u64,
}

/// Non-fatal replay anomalies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum EngineWarning {
    /// The order was already fully filled (or cancelled) when its cancel arrived.
    #[error("cancel of order {0}, which is no longer in the book")]
    CancelUnknownOrder(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("order {0} is already resting in the book")]
    DuplicateOrderId(u64),
    #[error("order {0} has non-positive price or zero quantity")]
    InvalidOrder(u64),
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct Applied {
    pub fills: Vec<Fill>,
    pub warning: Option<EngineWarning>,
}

type Level = VecDeque<RestingOrder>;

/// The two-sided book.
///
/// Bids and asks are both keyed by ascending price; the best bid is the last
/// bid key and the best ask the first ask key.
#[derive(Debug, Default, Clone)]
pub struct OrderBook {
    bids: BTreeMap<i64, Level>,
    asks: BTreeMap<i64, Level>,
    index: HashMap<u64, (Side, i64)>,
}

impl OrderBook {
    pub fn new() -> Self {
        Self::default()
    }

    fn book(&self, side: Side) -> &BTreeMap<i64, Level> {
        match side {
            Side::Buy => &self.bids,
            Side::Sell => &self.asks,
        }
    }

    fn book_mut(&mut self, side: Side) -> &mut BTreeMap<i64, Level> {
        match side {
            Side::Buy => &mut self.bids,
            Side::Sell => &mut self.asks,
        }
    }

    pub fn best(&self, side: Side) -> Option<i64> {
        match side {
            Side::Buy => self.bids.keys().next_back().copied(),
            Side::Sell => self.asks.keys().next().copied(),
        }
    }

    /// First and second occupied price levels of `side` (b1, b2 or a1, a2).
    pub fn top_two(&self, side: Side) -> Option<(i64, i64)> {
        let mut it: Box<dyn Iterator<Item = &i64>> = match side {
            Side::Buy => Box::new(self.bids.keys().rev()),
            Side::Sell => Box::new(self.asks.keys()),
        };
        let first = *it.next()?;
        let second = *it.next()?;
        Some((first, second))
    }

    pub fn contains(&self, order_id: u64) -> bool {
        self.index.contains_key(&order_id)
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Number of occupied price levels on `side`.
    pub fn depth(&self, side: Side) -> usize {
        self.book(side).len()
    }

    /// Occupied levels from best to worst, with their queues in time priority.
    pub fn levels(&self, side: Side) -> Vec<(i64, Vec<RestingOrder>)> {
        let collect = |(p, q): (&i64, &Level)| (*p, q.iter().copied().collect());
        match side {
            Side::Buy => self.bids.iter().rev().map(collect).collect(),
            Side::Sell => self.asks.iter().map(collect).collect(),
        }
    }

    /// Remaining quantity of a resting order.
    pub fn remaining(&self, order_id: u64) -> Option<u64> {
        let (side, price) = *self.index.get(&order_id)?;
        self.book(side)[&price].iter().find(|o| o.order_id == order_id).map(|o| o.remaining)
    }

    pub fn apply(&mut self, event: &OrderEvent) -> Result<Applied, EngineError> {
        match event.kind {
            EventKind::Submit => self.submit(event.order_id, event.side, event.price, event.quantity),
            EventKind::Cancel => Ok(self.cancel(event.order_id)),
        }
    }

    pub fn submit(&mut self, order_id: u64, side: Side, price: i64, quantity: u64) -> Result<Applied, EngineError> {
        if price <= 0 || quantity == 0 {
            return Err(EngineError::InvalidOrder(order_id));
        }
        if self.index.contains_key(&order_id) {
            return Err(EngineError::DuplicateOrderId(order_id));
        }
        let mut remaining = quantity;
        let mut fills = Vec::new();
        let contra = side.opposite();
        while remaining > 0 {
            let Some(best) = self.best(contra) else { break };
            let crosses = match side {
                Side::Buy => price >= best,
                Side::Sell => price <= best,
            };
            if !crosses {
                break;
            }
            let level = self.book_mut(contra).get_mut(&best).expect("best level exists");
            let mut emptied = Vec::new();
            while remaining > 0 {
                let Some(head) = level.front_mut() else { break };
                let traded = remaining.min(head.remaining);
                fills.push(Fill { taker_id: order_id, maker_id: head.order_id, taker_side: side, price: best, quantity: traded });
                remaining -= traded;
                head.remaining -= traded;
                if head.remaining == 0 {
                    emptied.push(head.order_id);
                    level.pop_front();
                }
            }
            let level_empty = level.is_empty();
            if level_empty {
                self.book_mut(contra).remove(&best);
            }
            for id in emptied {
                self.index.remove(&id);
            }
        }
        if remaining > 0 {
            self.book_mut(side).entry(price).or_default().push_back(RestingOrder { order_id, remaining });
            self.index.insert(order_id, (side, price));
        }
        Ok(Applied { fills, warning: None })
    }

    pub fn cancel(&mut self, order_id: u64) -> Applied {
        let Some((side, price)) = self.index.remove(&order_id) else {
            return Applied { fills: Vec::new(), warning: Some(EngineWarning::CancelUnknownOrder(order_id)) };
        };
        let book = self.book_mut(side);
        let level = book.get_mut(&price).expect("indexed level exists");
        if let Some(pos) = level.iter().position(|o| o.order_id == order_id) {
            level.remove(pos);
        }
        if level.is_empty() {
            book.remove(&price);
        }
        Applied::default()
    }

    /// Checks the resting-book invariants; used by tests and debug builds.
    pub fn check_invariants(&self) -> Result<(), String> {
        if let (Some(b), Some(a)) = (self.best(Side::Buy), self.best(Side::Sell)) {
            if b >= a {
                return Err(format!("crossed book: bid {b} >= ask {a}"));
            }
        }
        let mut count = 0;
        for side in [Side::Buy, Side::Sell] {
            for (price, level) in self.book(side) {
                if level.is_empty() {
                    return Err(format!("empty level at {price}"));
                }
                for o in level {
                    if o.remaining == 0 {
                        return Err(format!("order {} rests with zero quantity", o.order_id));
                    }
                    if self.index.get(&o.order_id) != Some(&(side, *price)) {
                        return Err(format!("index out of sync for order {}", o.order_id));
                    }
                    count += 1;
                }
            }
        }
        if count != self.index.len() {
            return Err("index holds orders that are not in the book".into());
        }
        Ok(())
    }
}
