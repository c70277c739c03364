//! Power-law tail fitting.
//!
//! For a candidate threshold `g_min` the tail exponent is the continuous
//! maximum-likelihood estimate
//!
//! ```text
//! beta = n / sum_i ln(g_i / g_min),   sigma = beta / sqrt(n)
//! ```
//!
//! over the `n` points with `g_i >= g_min`, and the threshold is the candidate
//! minimising the Kolmogorov-Smirnov distance between the tail's empirical CDF
//! and `1 - (g / g_min)^-beta`. Goodness of fit is assessed with a
//! semi-parametric bootstrap: synthetic samples draw their tail from the fitted
//! law and their body from the empirical values below `g_min`, and are refitted
//! with the same procedure.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding::job_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub g_min: f64,
    pub beta: f64,
    pub sigma: f64,
    pub ks: f64,
    pub n_tail: usize,
    pub n_sample: usize,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PowerLawError {
    #[error("tail has {n} points, at least {min} required")]
    InsufficientTail { n: usize, min: usize },
    #[error("every tail point equals g_min")]
    DegenerateTail,
    #[error("sample has {distinct} distinct values, at least {required} required")]
    InsufficientSample { distinct: usize, required: usize },
    #[error("sample contains non-positive or non-finite values")]
    InvalidSample,
}

/// Threshold-scan settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Smallest tail a candidate threshold may leave.
    pub min_tail: usize,
    /// Smallest number of distinct sample values accepted.
    pub min_distinct: usize,
    /// Tail points used for each candidate's KS lower bound.
    pub probe_points: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { min_tail: 100, min_distinct: 50, probe_points: 16 }
    }
}

/// Inverse CDF of the continuous power law above `g_min`; `u` in (0, 1].
pub fn pareto_quantile(u: f64, beta: f64, g_min: f64) -> f64 {
    g_min * u.powf(-1.0 / beta)
}

fn validate(sample: &[f64]) -> Result<(), PowerLawError> {
    if sample.iter().all(|g| g.is_finite() && *g > 0.0) {
        Ok(())
    } else {
        Err(PowerLawError::InvalidSample)
    }
}

/// Maximum-likelihood exponent and its standard error over `g >= g_min`.
pub fn mle_beta(sample: &[f64], g_min: f64) -> Result<(f64, f64), PowerLawError> {
    if !(g_min > 0.0) {
        return Err(PowerLawError::InvalidSample);
    }
    let (n, sum) = sample
        .iter()
        .filter(|&&g| g >= g_min)
        .fold((0usize, 0.0f64), |(n, s), &g| (n + 1, s + (g / g_min).ln()));
    if n < 2 {
        return Err(PowerLawError::InsufficientTail { n, min: 2 });
    }
    if sum <= 0.0 {
        return Err(PowerLawError::DegenerateTail);
    }
    let beta = n as f64 / sum;
    Ok((beta, beta / (n as f64).sqrt()))
}

/// KS distance on a sorted tail.
///
/// The empirical CDF is right-continuous and the distance is taken at both
/// limits of every step, so a run of tied values at `x` contributes
/// `|F(x) - P(< x)|` and `|F(x) - P(<= x)|`. Returns early with a value above
/// `bound` as soon as the distance exceeds it.
fn ks_sorted(values: &[f64], logs: &[f64], ln_gmin: f64, beta: f64, bound: f64) -> f64 {
    let m = values.len() as f64;
    let mut d = 0.0f64;
    let mut j = 0;
    while j < values.len() {
        let mut e = j;
        while e + 1 < values.len() && values[e + 1] == values[j] {
            e += 1;
        }
        let fitted = 1.0 - (-beta * (logs[j] - ln_gmin)).exp();
        let below = j as f64 / m;
        let at = (e + 1) as f64 / m;
        d = d.max((fitted - below).abs()).max((fitted - at).abs());
        if d > bound {
            return d;
        }
        j = e + 1;
    }
    d
}

/// KS distance between the tail `g >= g_min` and the fitted power law.
pub fn ks_statistic(sample: &[f64], g_min: f64, beta: f64) -> Result<f64, PowerLawError> {
    let mut tail: Vec<f64> = sample.iter().copied().filter(|&g| g >= g_min).collect();
    if tail.is_empty() {
        return Err(PowerLawError::InsufficientTail { n: 0, min: 1 });
    }
    tail.sort_by(f64::total_cmp);
    let logs: Vec<f64> = tail.iter().map(|g| g.ln()).collect();
    Ok(ks_sorted(&tail, &logs, g_min.ln(), beta, f64::INFINITY))
}

#[derive(Debug, Clone, Copy)]
struct Bound {
    lb: f64,
    ci: usize,
    probes: usize,
}

impl PartialEq for Bound {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Bound {}

impl PartialOrd for Bound {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Bound {
    fn cmp(&self, other: &Self) -> Ordering {
        self.lb.total_cmp(&other.lb).then(self.ci.cmp(&other.ci))
    }
}

struct Prepared {
    values: Vec<f64>,
    logs: Vec<f64>,
    /// suffix[k] = sum of logs[k..]
    suffix: Vec<f64>,
    /// Start index of every admissible distinct value.
    candidates: Vec<usize>,
}

impl Prepared {
    fn new(sample: &[f64], cfg: &FitConfig) -> Result<Self, PowerLawError> {
        validate(sample)?;
        let mut values = sample.to_vec();
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let logs: Vec<f64> = values.iter().map(|g| g.ln()).collect();
        let mut suffix = vec![0.0; n + 1];
        for k in (0..n).rev() {
            suffix[k] = suffix[k + 1] + logs[k];
        }
        let starts: Vec<usize> = (0..n).filter(|&k| k == 0 || values[k] != values[k - 1]).collect();
        if starts.len() < cfg.min_distinct.max(2) {
            return Err(PowerLawError::InsufficientSample { distinct: starts.len(), required: cfg.min_distinct.max(2) });
        }
        let min_tail = cfg.min_tail.max(2);
        // the last distinct value would leave a degenerate tail
        let last_start = *starts.last().unwrap();
        let candidates: Vec<usize> =
            starts.into_iter().filter(|&k| n - k >= min_tail && k != last_start).collect();
        if candidates.is_empty() {
            return Err(PowerLawError::InsufficientSample { distinct: 0, required: min_tail });
        }
        Ok(Prepared { values, logs, suffix, candidates })
    }

    fn beta_at(&self, k: usize) -> f64 {
        let m = (self.values.len() - k) as f64;
        m / (self.suffix[k] - m * self.logs[k])
    }

    /// KS distance at `probes` evenly spaced tail points; never above the
    /// full distance since `|F - t|` is convex in `t` over a run of ties.
    fn lower_bound(&self, k: usize, probes: usize) -> f64 {
        let n = self.values.len();
        let m = n - k;
        let beta = self.beta_at(k);
        let mut d = 0.0f64;
        for t in 0..probes {
            let j = k + t * (m - 1) / (probes - 1);
            let fitted = 1.0 - (-beta * (self.logs[j] - self.logs[k])).exp();
            let below = (j - k) as f64 / m as f64;
            let at = (j - k + 1) as f64 / m as f64;
            d = d.max((fitted - below).abs()).max((fitted - at).abs());
        }
        d
    }

    fn ks_at(&self, k: usize, bound: f64) -> f64 {
        ks_sorted(&self.values[k..], &self.logs[k..], self.logs[k], self.beta_at(k), bound)
    }
}

/// Picks the KS-minimising threshold among distinct sample values.
///
/// Ties go to the smallest threshold. The scan is exact but avoids most full
/// KS evaluations. Each candidate starts with a lower bound from the distance
/// at [`FitConfig::probe_points`] evenly spaced tail points; the candidate
/// with the smallest bound is repeatedly refined with eight times as many
/// points, and finally evaluated in full, until the smallest remaining bound
/// exceeds the best distance found.
pub fn fit_power_law(sample: &[f64], cfg: &FitConfig) -> Result<PowerLawFit, PowerLawError> {
    let prep = Prepared::new(sample, cfg)?;
    let p0 = cfg.probe_points.max(2);
    let mut heap: BinaryHeap<Reverse<Bound>> = prep
        .candidates
        .iter()
        .enumerate()
        .map(|(ci, &k)| Reverse(Bound { lb: prep.lower_bound(k, p0), ci, probes: p0 }))
        .collect();

    let mut best: Option<(f64, usize)> = None;
    while let Some(Reverse(b)) = heap.pop() {
        let bound = best.map_or(f64::INFINITY, |x| x.0);
        if b.lb > bound {
            break;
        }
        let k = prep.candidates[b.ci];
        let probes = b.probes * 8;
        if probes < prep.values.len() - k {
            let lb = prep.lower_bound(k, probes).max(b.lb);
            heap.push(Reverse(Bound { lb, ci: b.ci, probes }));
            continue;
        }
        let ks = prep.ks_at(k, bound);
        let better = match best {
            None => true,
            Some((bks, bci)) => ks < bks || (ks == bks && b.ci < bci),
        };
        if better {
            best = Some((ks, b.ci));
        }
    }

    let (_, ci) = best.expect("at least one candidate");
    let k = prep.candidates[ci];
    let g_min = prep.values[k];
    let tail = &prep.values[k..];
    let (beta, sigma) = mle_beta(tail, g_min)?;
    let ks = ks_sorted(tail, &prep.logs[k..], prep.logs[k], beta, f64::INFINITY);
    Ok(PowerLawFit { g_min, beta, sigma, ks, n_tail: tail.len(), n_sample: sample.len(), p_value: None })
}

/// Bootstrap outcome: the p-value and every realisation's KS distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bootstrap {
    pub p_value: f64,
    pub ks_sim: Vec<f64>,
    pub failed_refits: usize,
}

/// Draws one semi-parametric synthetic sample of the same size as the data.
pub fn bootstrap_sample<R: Rng>(body: &[f64], fit: &PowerLawFit, n: usize, rng: &mut R) -> Vec<f64> {
    let p_tail = fit.n_tail as f64 / fit.n_sample.max(1) as f64;
    (0..n)
        .map(|_| {
            if body.is_empty() || rng.gen::<f64>() < p_tail {
                pareto_quantile(1.0 - rng.gen::<f64>(), fit.beta, fit.g_min)
            } else {
                body[rng.gen_range(0..body.len())]
            }
        })
        .collect()
}

/// Fraction of synthetic realisations whose refitted KS exceeds the data's.
///
/// Realisation `r` is seeded from `(master_seed, r)`, so the result does not
/// depend on how the realisations are scheduled. A refit that fails counts as
/// exceeding.
pub fn bootstrap_p_value(
    sample: &[f64],
    fit: &PowerLawFit,
    n_real: usize,
    master_seed: u64,
    cfg: &FitConfig,
) -> Result<Bootstrap, PowerLawError> {
    validate(sample)?;
    if n_real == 0 {
        return Err(PowerLawError::InsufficientSample { distinct: 0, required: 1 });
    }
    let body: Vec<f64> = sample.iter().copied().filter(|&g| g < fit.g_min).collect();
    let ks_sim: Vec<f64> = (0..n_real)
        .into_par_iter()
        .map(|r| {
            let mut rng = job_rng(master_seed, r as u64);
            let synth = bootstrap_sample(&body, fit, sample.len(), &mut rng);
            fit_power_law(&synth, cfg).map_or(f64::INFINITY, |f| f.ks)
        })
        .collect();
    let exceed = ks_sim.iter().filter(|&&k| k > fit.ks).count();
    let failed_refits = ks_sim.iter().filter(|k| k.is_infinite()).count();
    Ok(Bootstrap { p_value: exceed as f64 / n_real as f64, ks_sim, failed_refits })
}
