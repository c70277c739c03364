//! Limit order book replay and the statistics of best-level price gaps.
//!
//! The crate is organised as a pipeline:
//!
//! - [`orderflow`] parses order-flow event files into [`orderflow::SessionStream`]s.
//! - [`engine`] replays them through a price-time-priority continuous double
//!   auction and records the gap between the first and second occupied price
//!   levels on each side after every event.
//! - [`powerlaw`], [`scaling`] and [`multifractal`] estimate tail exponents,
//!   Hurst exponents and multifractal spectra of the gap series.
//! - [`surrogates`] separates distributional from temporal effects by shuffling.
//! - [`regress`] compares per-instrument statistics across the cross-section.
//! - [`synth`] generates synthetic inputs with known ground truth.

pub mod engine;
pub mod multifractal;
pub mod orderflow;
pub mod powerlaw;
pub mod regress;
pub mod scaling;
pub mod stats;
pub mod surrogates;
pub mod synth;

mod detrend;
mod seeding;

pub use engine::{GapObservation, GapSeries, GapSummary, OrderBook};
pub use orderflow::{OrderEvent, SessionStream, Side, TickSize};
pub use powerlaw::PowerLawFit;
pub use scaling::{FluctuationCurve, HurstEstimate, Profile};
