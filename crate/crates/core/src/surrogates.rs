//! Shuffle surrogates: random permutations keep the value distribution of a
//! series and destroy its temporal order.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::multifractal::{mfdfa, MultifractalError, QGrid};
use crate::scaling::{hurst_dfa, hurst_dma, ScalingConfig, ScalingError};
use crate::seeding::job_rng;
use crate::stats;

/// Statistic recomputed on every surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Statistic {
    HDfa,
    HDma,
    DeltaAlpha,
}

impl Statistic {
    pub fn name(self) -> &'static str {
        match self {
            Statistic::HDfa => "H_DFA",
            Statistic::HDma => "H_DMA",
            Statistic::DeltaAlpha => "delta_alpha",
        }
    }

    pub fn evaluate(self, series: &[f64], scaling: &ScalingConfig, q_grid: &QGrid) -> Result<f64, SurrogateError> {
        Ok(match self {
            Statistic::HDfa => hurst_dfa(series, scaling)?.1.h,
            Statistic::HDma => hurst_dma(series, scaling)?.1.h,
            Statistic::DeltaAlpha => mfdfa(series, scaling, q_grid)?.1.delta_alpha,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SurrogateError {
    #[error(transparent)]
    Scaling(#[from] ScalingError),
    #[error(transparent)]
    Multifractal(#[from] MultifractalError),
    #[error("series is empty")]
    Empty,
    #[error("n_shuffles must be at least 1")]
    NoShuffles,
    #[error("statistic failed on all {0} surrogates")]
    AllFailed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateReport {
    pub n_shuffles: usize,
    pub statistic_name: String,
    pub original_value: f64,
    pub surrogate_mean: f64,
    pub surrogate_std: f64,
    /// One entry per shuffle; failed shuffles hold NaN, written as `null`.
    #[serde(deserialize_with = "nan_as_null")]
    pub surrogate_values: Vec<f64>,
    pub failures: Vec<(usize, String)>,
}

fn nan_as_null<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    let v: Vec<Option<f64>> = Deserialize::deserialize(d)?;
    Ok(v.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
}

/// Fisher-Yates permutation driven by `rng`.
pub fn shuffle_with<R: rand::Rng>(series: &[f64], rng: &mut R) -> Vec<f64> {
    let mut out = series.to_vec();
    out.shuffle(rng);
    out
}

/// Uniformly random permutation determined by `seed`.
pub fn shuffle_series(series: &[f64], seed: u64) -> Vec<f64> {
    shuffle_with(series, &mut job_rng(seed, 0))
}

/// Evaluates `statistic` on the series and on `n_shuffles` permutations of it.
///
/// Shuffle `i` is drawn from the stream `(master_seed, i)`, so the report
/// does not depend on how the shuffles are scheduled. Failing shuffles are
/// recorded and left out of the mean and standard deviation.
pub fn surrogate_test(
    series: &[f64],
    statistic: Statistic,
    n_shuffles: usize,
    master_seed: u64,
    scaling: &ScalingConfig,
    q_grid: &QGrid,
) -> Result<SurrogateReport, SurrogateError> {
    if series.is_empty() {
        return Err(SurrogateError::Empty);
    }
    if n_shuffles == 0 {
        return Err(SurrogateError::NoShuffles);
    }
    let original_value = statistic.evaluate(series, scaling, q_grid)?;
    let results: Vec<Result<f64, SurrogateError>> = (0..n_shuffles)
        .into_par_iter()
        .map(|i| {
            let shuffled = shuffle_with(series, &mut job_rng(master_seed, i as u64));
            statistic.evaluate(&shuffled, scaling, q_grid)
        })
        .collect();
    let mut values = Vec::with_capacity(n_shuffles);
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => values.push(v),
            Err(e) => {
                log::warn!("surrogate {i} failed: {e}");
                failures.push((i, e.to_string()));
                values.push(f64::NAN);
            }
        }
    }
    let ok: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    if ok.is_empty() {
        return Err(SurrogateError::AllFailed(n_shuffles));
    }
    Ok(SurrogateReport {
        n_shuffles,
        statistic_name: statistic.name().to_string(),
        original_value,
        surrogate_mean: stats::mean(&ok),
        surrogate_std: if ok.len() > 1 { stats::sample_std(&ok) } else { 0.0 },
        surrogate_values: values,
        failures,
    })
}
