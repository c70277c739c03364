//! Multifractal detrended fluctuation analysis.
//!
//! The box variances of DFA are aggregated with order `q`:
//!
//! ```text
//! F_q(s) = { mean_v F_v(s)^q }^(1/q)        q != 0
//! ln F_0(s) = mean_v ln F_v(s)
//! ```
//!
//! and `F_q(s) ~ s^h(q)` defines the generalised Hurst exponent. The mass
//! exponent is `tau(q) = q h(q) - 1`, and its Legendre transform
//! `alpha = tau'(q)`, `f = q alpha - tau` gives the singularity spectrum, whose
//! width `max alpha - min alpha` measures the strength of multifractality.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detrend::box_variances;
use crate::scaling::{build_profile, fit_hurst, rms_of_variances, FluctuationCurve, Method, Profile, ScalingConfig, ScalingError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MultifractalError {
    #[error(transparent)]
    Scaling(#[from] ScalingError),
    #[error("every box at scale {scale} has zero fluctuation; F_q undefined for q = {q}")]
    AllBoxesDegenerate { scale: usize, q: f64 },
    #[error("q grid must be strictly increasing, finite and contain 0 and 2")]
    InvalidGrid,
    #[error("Legendre transform needs at least 3 grid points, got {0}")]
    GridTooSparse(usize),
}

/// Strictly increasing moment orders, always including 0 and 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct QGrid(Vec<f64>);

impl QGrid {
    pub fn new(q: Vec<f64>) -> Result<Self, MultifractalError> {
        let increasing = q.windows(2).all(|w| w[0] < w[1]);
        if !increasing || q.iter().any(|v| !v.is_finite()) || !q.contains(&0.0) || !q.contains(&2.0) {
            return Err(MultifractalError::InvalidGrid);
        }
        Ok(QGrid(q))
    }

    /// `from..=to` in steps of `step`; endpoints must be multiples of `step`.
    pub fn range(from: f64, to: f64, step: f64) -> Result<Self, MultifractalError> {
        if !(step > 0.0) || to < from {
            return Err(MultifractalError::InvalidGrid);
        }
        let lo = (from / step).round() as i64;
        let hi = (to / step).round() as i64;
        QGrid::new((lo..=hi).map(|i| i as f64 * step).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl Default for QGrid {
    /// -4 to 4 in steps of 0.25.
    fn default() -> Self {
        QGrid((-16..=16).map(|i| i as f64 * 0.25).collect())
    }
}

impl TryFrom<Vec<f64>> for QGrid {
    type Error = MultifractalError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        QGrid::new(v)
    }
}

impl From<QGrid> for Vec<f64> {
    fn from(g: QGrid) -> Vec<f64> {
        g.0
    }
}

/// Aggregates one scale's box variances at order `q`. Returns the value and
/// the number of zero boxes left out.
fn aggregate(vars: &[f64], q: f64) -> (f64, usize) {
    if q == 2.0 {
        return (rms_of_variances(vars), 0);
    }
    if q > 0.0 {
        let half = q / 2.0;
        let mean = vars.iter().map(|v| v.powf(half)).sum::<f64>() / vars.len() as f64;
        return (mean.powf(1.0 / q), 0);
    }
    let nonzero: Vec<f64> = vars.iter().copied().filter(|&v| v > 0.0).collect();
    let excluded = vars.len() - nonzero.len();
    if nonzero.is_empty() {
        return (0.0, excluded);
    }
    let value = if q == 0.0 {
        (0.5 * nonzero.iter().map(|v| v.ln()).sum::<f64>() / nonzero.len() as f64).exp()
    } else {
        let half = q / 2.0;
        (nonzero.iter().map(|v| v.powf(half)).sum::<f64>() / nonzero.len() as f64).powf(1.0 / q)
    };
    (value, excluded)
}

/// `F_q(s)` for every `q` of the grid, one curve per `q`.
///
/// Box layout and detrending are those of [`crate::scaling::dfa_fluctuation`],
/// and at `q = 2` the result is identical to it. For `q <= 0` boxes with zero
/// fluctuation are excluded and counted in [`FluctuationCurve::excluded`].
pub fn mfdfa_fluctuation(
    profile: &Profile,
    scales: &[usize],
    q_grid: &QGrid,
    order: usize,
) -> Result<Vec<FluctuationCurve>, MultifractalError> {
    if order > 3 {
        return Err(ScalingError::UnsupportedOrder(order).into());
    }
    let max = profile.len() / 4;
    if let Some(&s) = scales.iter().find(|&&s| s < order + 2 || s > max) {
        return Err(ScalingError::ScaleOutOfRange { scale: s, min: order + 2, max }.into());
    }
    let mut curves: Vec<FluctuationCurve> = q_grid
        .values()
        .iter()
        .map(|&q| FluctuationCurve {
            method: Method::Dfa { order },
            q,
            scales: scales.to_vec(),
            fluctuation: Vec::with_capacity(scales.len()),
            boxes: Vec::with_capacity(scales.len()),
            excluded: Vec::with_capacity(scales.len()),
        })
        .collect();
    for &s in scales {
        let vars = box_variances(profile.values(), s, order);
        for curve in curves.iter_mut() {
            let (f, excluded) = aggregate(&vars, curve.q);
            if excluded == vars.len() {
                return Err(MultifractalError::AllBoxesDegenerate { scale: s, q: curve.q });
            }
            curve.fluctuation.push(f);
            curve.boxes.push(vars.len());
            curve.excluded.push(excluded);
        }
    }
    Ok(curves)
}

/// `tau(q) = q h(q) - 1`.
pub fn mass_exponents(q: &[f64], h: &[f64]) -> Vec<f64> {
    q.iter().zip(h).map(|(q, h)| q * h - 1.0).collect()
}

/// Derivative of the quadratic through three points, evaluated at `x`.
fn three_point_derivative(xs: [f64; 3], ys: [f64; 3], x: f64) -> f64 {
    let [x0, x1, x2] = xs;
    let [y0, y1, y2] = ys;
    y0 * (2.0 * x - x1 - x2) / ((x0 - x1) * (x0 - x2))
        + y1 * (2.0 * x - x0 - x2) / ((x1 - x0) * (x1 - x2))
        + y2 * (2.0 * x - x0 - x1) / ((x2 - x0) * (x2 - x1))
}

/// Legendre transform of `tau(q)` by finite differences.
///
/// `alpha = dtau/dq` uses the three-point formula: centred at interior
/// points and one-sided (second order) at the two ends, so it is exact for
/// quadratic `tau` on any grid. Returns `(alpha, f(alpha), delta_alpha)`.
pub fn legendre_spectrum(q: &[f64], tau: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64), MultifractalError> {
    let n = q.len();
    if n < 3 || tau.len() != n {
        return Err(MultifractalError::GridTooSparse(n.min(tau.len())));
    }
    let alpha: Vec<f64> = (0..n)
        .map(|i| {
            let c = i.clamp(1, n - 2);
            three_point_derivative([q[c - 1], q[c], q[c + 1]], [tau[c - 1], tau[c], tau[c + 1]], q[i])
        })
        .collect();
    let f: Vec<f64> = (0..n).map(|i| q[i] * alpha[i] - tau[i]).collect();
    let max = alpha.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = alpha.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((alpha, f, max - min))
}

/// Full MF-DFA result for one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultifractalSpectrum {
    pub q: Vec<f64>,
    pub h: Vec<f64>,
    pub h_stderr: Vec<f64>,
    pub tau: Vec<f64>,
    pub alpha: Vec<f64>,
    pub f_alpha: Vec<f64>,
    pub delta_alpha: f64,
    /// `h(q)` is flagged when more than 1% of boxes were excluded at any scale.
    pub unreliable: Vec<bool>,
}

impl MultifractalSpectrum {
    pub fn h_at(&self, q: f64) -> Option<f64> {
        self.q.iter().position(|&v| v == q).map(|i| self.h[i])
    }

    /// Whether tau is non-decreasing and alpha non-increasing within `tol`.
    pub fn is_concave(&self, tol: f64) -> bool {
        self.tau.windows(2).all(|w| w[1] >= w[0] - tol) && self.alpha.windows(2).all(|w| w[1] <= w[0] + tol)
    }
}

/// Runs MF-DFA on fluctuation curves produced by [`mfdfa_fluctuation`].
pub fn spectrum_from_curves(
    curves: &[FluctuationCurve],
    fit_range: Option<(usize, usize)>,
) -> Result<MultifractalSpectrum, MultifractalError> {
    let mut q = Vec::with_capacity(curves.len());
    let mut h = Vec::with_capacity(curves.len());
    let mut h_stderr = Vec::with_capacity(curves.len());
    let mut unreliable = Vec::with_capacity(curves.len());
    for c in curves {
        let est = fit_hurst(c, fit_range)?;
        q.push(c.q);
        h.push(est.h);
        h_stderr.push(est.stderr);
        unreliable.push(c.excluded.iter().zip(&c.boxes).any(|(&e, &b)| e as f64 > 0.01 * b as f64));
    }
    let tau = mass_exponents(&q, &h);
    let (alpha, f_alpha, delta_alpha) = legendre_spectrum(&q, &tau)?;
    Ok(MultifractalSpectrum { q, h, h_stderr, tau, alpha, f_alpha, delta_alpha, unreliable })
}

/// MF-DFA of a raw series with the scale grid and order of `cfg`.
pub fn mfdfa(
    series: &[f64],
    cfg: &ScalingConfig,
    q_grid: &QGrid,
) -> Result<(Vec<FluctuationCurve>, MultifractalSpectrum), MultifractalError> {
    let profile = build_profile(series)?;
    let curves = mfdfa_fluctuation(&profile, &cfg.scales_for(series.len()), q_grid, cfg.dfa_order)?;
    let spectrum = spectrum_from_curves(&curves, cfg.fit_range)?;
    Ok((curves, spectrum))
}
