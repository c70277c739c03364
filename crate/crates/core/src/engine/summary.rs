use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::GapSeries;
use crate::stats;

/// Per-side summary of a gap series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    /// Orders submitted on this side per minute; `None` when the session has no duration.
    pub mu: Option<f64>,
    /// Fraction of defined gaps spanning exactly one tick.
    pub omega: f64,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub skewness: Option<f64>,
    pub kurtosis: Option<f64>,
    pub n_defined: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SummaryError {
    #[error("gap series has no defined observations")]
    EmptySeries,
}

/// Order-flow rate, one-tick ratio and moments over the defined gaps.
///
/// Moments use 1/n normalisation; kurtosis is the raw fourth standardised
/// moment. One-tick gaps are counted on the integer tick distance.
pub fn summarize_gaps(series: &GapSeries, session_minutes: f64) -> Result<GapSummary, SummaryError> {
    let gaps = series.defined_gaps();
    if gaps.is_empty() {
        return Err(SummaryError::EmptySeries);
    }
    let one_tick = series.observations.iter().filter(|o| o.defined && o.tick_diff == 1).count();
    let m = stats::moments(&gaps);
    Ok(GapSummary {
        mu: (session_minutes > 0.0).then(|| series.submissions as f64 / session_minutes),
        omega: one_tick as f64 / gaps.len() as f64,
        mean: m.mean,
        median: stats::median(&gaps),
        std: m.std,
        skewness: m.skewness,
        kurtosis: m.kurtosis,
        n_defined: gaps.len(),
    })
}
