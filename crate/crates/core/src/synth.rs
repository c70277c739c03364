//! Synthetic inputs with known ground truth.

use rand::Rng;
use rand_distr::{Exp, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::OrderBook;
use crate::orderflow::{OrderEvent, SessionStream, Side};
use crate::seeding::job_rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("bad generator parameters: {0}")]
    BadParams(String),
}

fn bad<T>(msg: impl Into<String>) -> Result<T, SynthError> {
    Err(SynthError::BadParams(msg.into()))
}

/// Parameters of the synthetic order-flow generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrderFlowParams {
    pub instrument: String,
    pub trading_day: String,
    /// Price in ticks around which the book is first built.
    pub start_price: i64,
    /// Resting-order count at which cancellations and submissions balance. An
    /// event is a cancellation with probability `n / (n + target_depth)` when
    /// `n` orders rest.
    pub target_depth: usize,
    /// Probability that a submission is priced at the opposite best.
    pub marketable_prob: f64,
    /// Tail exponent of the distance in ticks between a new order and the
    /// tick just inside the opposite best.
    pub offset_beta: f64,
    pub max_offset: i64,
    /// Mean time between events, in centiseconds.
    pub mean_interarrival: f64,
    pub max_lots: u64,
    pub lot_size: u64,
}

impl Default for OrderFlowParams {
    fn default() -> Self {
        OrderFlowParams {
            instrument: "SYN001".into(),
            trading_day: "20030102".into(),
            start_price: 1000,
            target_depth: 40,
            marketable_prob: 0.15,
            offset_beta: 1.0,
            max_offset: 200,
            mean_interarrival: 15.0,
            max_lots: 10,
            lot_size: 100,
        }
    }
}

impl OrderFlowParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.start_price < 1 {
            return bad("start_price must be at least one tick");
        }
        if self.target_depth == 0 || !(0.0..=1.0).contains(&self.marketable_prob) {
            return bad("target_depth must be positive and marketable_prob in [0, 1]");
        }
        if !(self.offset_beta > 0.0) || self.max_offset < 1 {
            return bad("offset_beta must be positive and max_offset at least 1");
        }
        if !(self.mean_interarrival > 0.0) || self.max_lots == 0 || self.lot_size == 0 {
            return bad("interarrival, max_lots and lot_size must be positive");
        }
        Ok(())
    }
}

/// What to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Power law above `g_min`; a fraction `body_fraction` is drawn uniformly from `(0, g_min]`.
    ParetoTail { beta: f64, g_min: f64, body_fraction: f64 },
    Fgn { hurst: f64 },
    BinomialCascade { p: f64, levels: u32 },
    IidGaussian,
    OrderFlow(OrderFlowParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub kind: GeneratorKind,
    /// Series length or number of events. Ignored by the cascade, whose length is `2^levels`.
    pub length: usize,
    pub seed: u64,
}

/// Generator output.
#[derive(Debug, Clone, PartialEq)]
pub enum Generated {
    Series(Vec<f64>),
    OrderFlow(SessionStream),
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        match &self.kind {
            GeneratorKind::ParetoTail { beta, g_min, body_fraction } => {
                check_pareto(*beta, *g_min)?;
                if !(0.0..1.0).contains(body_fraction) {
                    return bad("body_fraction must lie in [0, 1)");
                }
            }
            GeneratorKind::Fgn { hurst } => {
                check_hurst(*hurst)?;
                if !self.length.is_power_of_two() {
                    return bad(format!("fGn length {} is not a power of two", self.length));
                }
            }
            GeneratorKind::BinomialCascade { p, levels } => check_cascade(*p, *levels)?,
            GeneratorKind::IidGaussian => {}
            GeneratorKind::OrderFlow(params) => params.validate()?,
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<Generated, SynthError> {
        self.validate()?;
        let n = self.length;
        Ok(match &self.kind {
            GeneratorKind::ParetoTail { beta, g_min, body_fraction } => {
                Generated::Series(gen_pareto_with_body(*beta, *g_min, *body_fraction, n, self.seed)?)
            }
            GeneratorKind::Fgn { hurst } => Generated::Series(gen_fgn(*hurst, n, self.seed)?),
            GeneratorKind::BinomialCascade { p, levels } => Generated::Series(gen_binomial_cascade(*p, *levels)?),
            GeneratorKind::IidGaussian => Generated::Series(gen_iid_gaussian(n, self.seed)),
            GeneratorKind::OrderFlow(params) => Generated::OrderFlow(gen_order_flow(params, n, self.seed)?),
        })
    }
}

fn check_pareto(beta: f64, g_min: f64) -> Result<(), SynthError> {
    if !(beta > 0.0 && beta.is_finite()) || !(g_min > 0.0 && g_min.is_finite()) {
        return bad("beta and g_min must be positive");
    }
    Ok(())
}

fn check_hurst(h: f64) -> Result<(), SynthError> {
    if !(h > 0.0 && h < 1.0) {
        return bad(format!("H = {h} outside (0, 1)"));
    }
    Ok(())
}

fn check_cascade(p: f64, levels: u32) -> Result<(), SynthError> {
    if !(p > 0.0 && p < 1.0) {
        return bad(format!("p = {p} outside (0, 1)"));
    }
    if !(8..=30).contains(&levels) {
        return bad(format!("levels = {levels} outside 8..=30"));
    }
    Ok(())
}

/// `g_min * u^(-1/beta)` with `u` uniform on `(0, 1]`.
pub fn gen_pareto(beta: f64, g_min: f64, n: usize, seed: u64) -> Result<Vec<f64>, SynthError> {
    gen_pareto_with_body(beta, g_min, 0.0, n, seed)
}

/// The first `round(n * body_fraction)` values are uniform on `(0, g_min]`,
/// the rest follow the power law above `g_min`.
pub fn gen_pareto_with_body(beta: f64, g_min: f64, body_fraction: f64, n: usize, seed: u64) -> Result<Vec<f64>, SynthError> {
    check_pareto(beta, g_min)?;
    if n == 0 {
        return bad("n must be at least 1");
    }
    let mut rng = job_rng(seed, 0);
    let n_body = (n as f64 * body_fraction).round() as usize;
    Ok((0..n)
        .map(|i| {
            let u = 1.0 - rng.gen::<f64>();
            if i < n_body {
                g_min * u
            } else {
                g_min * u.powf(-1.0 / beta)
            }
        })
        .collect())
}

/// Autocovariance of unit-variance fractional Gaussian noise.
pub fn fgn_autocovariance(h: f64, k: usize) -> f64 {
    let k = k as f64;
    let e = 2.0 * h;
    0.5 * ((k + 1.0).powf(e) - 2.0 * k.powf(e) + (k - 1.0).abs().powf(e))
}

/// Fractional Gaussian noise by exact circulant embedding.
///
/// Negative eigenvalues of the embedding, which only arise from rounding,
/// are clipped to zero with a warning.
pub fn gen_fgn(h: f64, n: usize, seed: u64) -> Result<Vec<f64>, SynthError> {
    check_hurst(h)?;
    if !n.is_power_of_two() {
        return bad(format!("fGn length {n} is not a power of two"));
    }
    if n == 1 {
        return Ok(vec![job_rng(seed, 0).sample(StandardNormal)]);
    }
    let m = 2 * n;
    let mut c: Vec<Complex<f64>> = Vec::with_capacity(m);
    for k in 0..=n {
        c.push(Complex::new(fgn_autocovariance(h, k), 0.0));
    }
    for k in (1..n).rev() {
        c.push(Complex::new(fgn_autocovariance(h, k), 0.0));
    }
    let fft = FftPlanner::new().plan_fft_forward(m);
    fft.process(&mut c);
    let mut clipped = 0usize;
    let mut rng = job_rng(seed, 0);
    let mut w: Vec<Complex<f64>> = c
        .iter()
        .map(|lambda| {
            let mut l = lambda.re;
            if l < 0.0 {
                clipped += 1;
                l = 0.0;
            }
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            Complex::new(a, b) * (l / m as f64).sqrt()
        })
        .collect();
    if clipped > 0 {
        log::warn!("circulant embedding for H = {h}: clipped {clipped} negative eigenvalues");
    }
    fft.process(&mut w);
    Ok(w[..n].iter().map(|z| z.re).collect())
}

/// Deterministic binomial measure on `2^levels` cells. Each dyadic split
/// gives fraction `p` of the mass to the left half and `1 - p` to the right.
pub fn gen_binomial_cascade(p: f64, levels: u32) -> Result<Vec<f64>, SynthError> {
    check_cascade(p, levels)?;
    let mut mass = vec![1.0f64];
    for _ in 0..levels {
        mass = mass.iter().flat_map(|&m| [m * p, m * (1.0 - p)]).collect();
    }
    Ok(mass)
}

pub fn gen_iid_gaussian(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = job_rng(seed, 0);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Random stream of limit submissions and cancellations.
///
/// The stream is driven through an [`OrderBook`] while it is generated, so
/// every cancellation targets an order that is live at that moment. New
/// orders are placed a power-law distributed number of ticks behind the
/// opposite best; a fraction are priced at the opposite best and execute.
/// The cancellation rate grows with the number of resting orders, which keeps
/// the book near `target_depth` orders.
/// Timestamps start at 09:30:00.
pub fn gen_order_flow(params: &OrderFlowParams, events: usize, seed: u64) -> Result<SessionStream, SynthError> {
    params.validate()?;
    let mut rng = job_rng(seed, 0);
    let gaps = Exp::new(1.0 / params.mean_interarrival).expect("positive rate");
    let mut stream = SessionStream::new(params.instrument.clone(), params.trading_day.clone());
    let mut book = OrderBook::new();
    let mut live: Vec<(u64, Side)> = Vec::new();
    let mut clock = 3_420_000.0f64;
    let mut next_id = 1u64;
    while stream.events.len() < events {
        clock += rng.sample(gaps);
        let ts = clock.floor() as i64;
        let thin = [Side::Buy, Side::Sell].into_iter().find(|&s| book.depth(s) < 3);
        let n = book.len() as f64;
        let ev = if thin.is_none() && rng.gen::<f64>() < n / (n + params.target_depth as f64) {
            loop {
                let i = rng.gen_range(0..live.len());
                let (id, side) = live[i];
                live.swap_remove(i);
                if book.contains(id) {
                    break OrderEvent::cancel(ts, id, side);
                }
            }
        } else {
            let side = thin.unwrap_or(if rng.gen::<bool>() { Side::Buy } else { Side::Sell });
            let price = place(&book, side, thin.is_some(), params, &mut rng);
            let qty = rng.gen_range(1..=params.max_lots) * params.lot_size;
            let ev = OrderEvent::submit(ts, next_id, side, price, qty);
            live.push((next_id, side));
            next_id += 1;
            ev
        };
        book.apply(&ev).expect("generator keeps ids unique");
        stream.events.push(ev);
        if live.len() > 4 * book.len() + 64 {
            live.retain(|(id, _)| book.contains(*id));
        }
    }
    Ok(stream)
}

fn place<R: Rng>(book: &OrderBook, side: Side, passive: bool, params: &OrderFlowParams, rng: &mut R) -> i64 {
    let own = book.best(side);
    let opp = book.best(side.opposite());
    let sign = match side {
        Side::Buy => -1,
        Side::Sell => 1,
    };
    if let (false, Some(o)) = (passive, opp) {
        if rng.gen::<f64>() < params.marketable_prob {
            return o;
        }
    }
    let reference = opp.map(|o| o + sign).or(own).unwrap_or(params.start_price);
    let u = 1.0 - rng.gen::<f64>();
    let offset = ((u.powf(-1.0 / params.offset_beta)).floor() as i64 - 1).min(params.max_offset);
    let mut price = reference + sign * offset;
    if let Some(o) = opp {
        // Never cross on a passive order.
        price = match side {
            Side::Buy => price.min(o - 1),
            Side::Sell => price.max(o + 1),
        };
    }
    price.max(1)
}
