//! Quadratic reference matcher: a flat list of resting orders, searched
//! linearly for every match. Slow, but small enough to check by eye.

#![allow(dead_code)]

use lobgap_core::engine::{Fill, RestingOrder};
use lobgap_core::orderflow::{EventKind, OrderEvent, Side};
use rand::Rng;

#[derive(Clone, Copy)]
struct Resting {
    id: u64,
    side: Side,
    price: i64,
    remaining: u64,
    seq: u64,
}

#[derive(Default)]
pub struct BruteBook {
    orders: Vec<Resting>,
    seq: u64,
}

fn crosses(taker: Side, limit: i64, maker_price: i64) -> bool {
    match taker {
        Side::Buy => maker_price <= limit,
        Side::Sell => maker_price >= limit,
    }
}

fn better(side: Side, a: i64, b: i64) -> bool {
    match side {
        Side::Buy => a > b,
        Side::Sell => a < b,
    }
}

impl BruteBook {
    /// Fills produced by the event, and whether a cancel missed.
    pub fn apply(&mut self, ev: &OrderEvent) -> (Vec<Fill>, bool) {
        if ev.kind == EventKind::Cancel {
            let before = self.orders.len();
            self.orders.retain(|o| o.id != ev.order_id);
            return (Vec::new(), before == self.orders.len());
        }
        let mut left = ev.quantity;
        let mut fills = Vec::new();
        while left > 0 {
            let mut pick: Option<usize> = None;
            for (i, o) in self.orders.iter().enumerate() {
                if o.side == ev.side || !crosses(ev.side, ev.price, o.price) {
                    continue;
                }
                pick = match pick {
                    None => Some(i),
                    Some(j) => {
                        let p = self.orders[j];
                        if better(o.side, o.price, p.price) || (o.price == p.price && o.seq < p.seq) {
                            Some(i)
                        } else {
                            Some(j)
                        }
                    }
                };
            }
            let Some(i) = pick else { break };
            let q = left.min(self.orders[i].remaining);
            let m = self.orders[i];
            fills.push(Fill { taker_id: ev.order_id, maker_id: m.id, taker_side: ev.side, price: m.price, quantity: q });
            left -= q;
            self.orders[i].remaining -= q;
            if self.orders[i].remaining == 0 {
                self.orders.remove(i);
            }
        }
        if left > 0 {
            self.seq += 1;
            self.orders.push(Resting { id: ev.order_id, side: ev.side, price: ev.price, remaining: left, seq: self.seq });
        }
        (fills, false)
    }

    /// Levels from best to worst with queues in time priority.
    pub fn levels(&self, side: Side) -> Vec<(i64, Vec<RestingOrder>)> {
        let mut prices: Vec<i64> = self.orders.iter().filter(|o| o.side == side).map(|o| o.price).collect();
        prices.sort_unstable();
        prices.dedup();
        if side == Side::Buy {
            prices.reverse();
        }
        prices
            .into_iter()
            .map(|p| {
                let mut q: Vec<Resting> = self.orders.iter().filter(|o| o.side == side && o.price == p).copied().collect();
                q.sort_by_key(|o| o.seq);
                (p, q.into_iter().map(|o| RestingOrder { order_id: o.id, remaining: o.remaining }).collect())
            })
            .collect()
    }

    /// `ln(b1/b2)` or `ln(a2/a1)` and the tick distance, if two levels exist.
    pub fn gap(&self, side: Side) -> Option<(f64, i64)> {
        let levels = self.levels(side);
        if levels.len() < 2 {
            return None;
        }
        let (a, b) = (levels[0].0, levels[1].0);
        let (hi, lo) = if side == Side::Buy { (a, b) } else { (b, a) };
        Some(((hi as f64 / lo as f64).ln(), hi - lo))
    }
}

/// Random stream around price 100 with crossing orders, cancels of live and
/// dead ids, and occasional cancels of ids never seen.
pub fn random_stream<R: Rng>(rng: &mut R, len: usize) -> Vec<OrderEvent> {
    let mut out = Vec::with_capacity(len);
    let mut next_id = 1u64;
    let mut t = 0i64;
    for _ in 0..len {
        t += rng.gen_range(0..3);
        let side = if rng.gen_bool(0.5) { Side::Buy } else { Side::Sell };
        let r: f64 = rng.gen();
        if r < 0.25 && next_id > 1 {
            out.push(OrderEvent::cancel(t, rng.gen_range(1..next_id), side));
        } else if r < 0.27 {
            out.push(OrderEvent::cancel(t, next_id + 1000, side));
        } else {
            let price = 100 + rng.gen_range(-8..=8);
            out.push(OrderEvent::submit(t, next_id, side, price, rng.gen_range(1..=5)));
            next_id += 1;
        }
    }
    out
}
