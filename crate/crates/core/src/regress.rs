//! Robust linear regression and buy/sell comparisons across instruments.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::stats;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegressionError {
    #[error("need at least {required} points, got {n}")]
    InsufficientData { n: usize, required: usize },
    #[error("x and y differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("regressor is constant")]
    DegenerateX,
    #[error("non-finite input")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub intercept: f64,
    pub slope: f64,
    pub intercept_stderr: f64,
    pub slope_stderr: f64,
    pub p_intercept: f64,
    pub p_slope: f64,
    pub n: usize,
    /// Final bisquare weights, one per point.
    pub weights: Vec<f64>,
    pub iterations: usize,
    /// False when the iteration limit was reached first; the last iterate is reported.
    pub converged: bool,
}

const TUNING: f64 = 4.685;
const MAD_NORMAL: f64 = 0.6745;
const MAX_ITER: usize = 50;
const TOL: f64 = 1e-8;

struct Wls {
    intercept: f64,
    slope: f64,
    sxx: f64,
    sw: f64,
    xbar: f64,
}

fn wls(x: &[f64], y: &[f64], w: &[f64]) -> Option<Wls> {
    let sw: f64 = w.iter().sum();
    if !(sw > 0.0) {
        return None;
    }
    let xbar = x.iter().zip(w).map(|(x, w)| w * x).sum::<f64>() / sw;
    let ybar = y.iter().zip(w).map(|(y, w)| w * y).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..x.len() {
        let dx = x[i] - xbar;
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * (y[i] - ybar);
    }
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    Some(Wls { intercept: ybar - slope * xbar, slope, sxx, sw, xbar })
}

fn bisquare(r: f64, scale: f64) -> f64 {
    let u = r / (TUNING * scale);
    if u.abs() < 1.0 {
        let t = 1.0 - u * u;
        t * t
    } else {
        0.0
    }
}

fn two_sided_p(coef: f64, se: f64, df: f64) -> f64 {
    if !(se > 0.0) {
        return if coef == 0.0 { 1.0 } else { 0.0 };
    }
    let t = (coef / se).abs();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * (1.0 - dist.cdf(t))).clamp(0.0, 1.0)
}

fn check(x: &[f64], y: &[f64]) -> Result<(), RegressionError> {
    if x.len() != y.len() {
        return Err(RegressionError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(RegressionError::InsufficientData { n: x.len(), required: 3 });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(RegressionError::NonFinite);
    }
    if x.iter().all(|&v| v == x[0]) {
        return Err(RegressionError::DegenerateX);
    }
    Ok(())
}

fn finish(x: &[f64], y: &[f64], fit: &Wls, weights: Vec<f64>, iterations: usize, converged: bool) -> RegressionResult {
    let n = x.len();
    let df = (n - 2) as f64;
    let rss: f64 = (0..n)
        .map(|i| {
            let r = y[i] - fit.intercept - fit.slope * x[i];
            weights[i] * r * r
        })
        .sum();
    let sigma2 = rss / df;
    let slope_stderr = (sigma2 / fit.sxx).sqrt();
    let intercept_stderr = (sigma2 * (1.0 / fit.sw + fit.xbar * fit.xbar / fit.sxx)).sqrt();
    RegressionResult {
        intercept: fit.intercept,
        slope: fit.slope,
        intercept_stderr,
        slope_stderr,
        p_intercept: two_sided_p(fit.intercept, intercept_stderr, df),
        p_slope: two_sided_p(fit.slope, slope_stderr, df),
        n,
        weights,
        iterations,
        converged,
    }
}

/// Ordinary least squares with t-based p-values.
pub fn ols_fit(x: &[f64], y: &[f64]) -> Result<RegressionResult, RegressionError> {
    check(x, y)?;
    let w = vec![1.0; x.len()];
    let fit = wls(x, y, &w).ok_or(RegressionError::DegenerateX)?;
    Ok(finish(x, y, &fit, w, 0, true))
}

/// Tukey bisquare regression by iteratively reweighted least squares.
///
/// The residual scale is the median absolute deviation divided by 0.6745
/// and the tuning constant is 4.685. Iteration starts from OLS and stops when
/// no weight moves by more than 1e-8, or after 50 rounds. Standard errors and
/// p-values come from the final weighted fit with `n - 2` degrees of freedom.
pub fn robust_fit(x: &[f64], y: &[f64]) -> Result<RegressionResult, RegressionError> {
    check(x, y)?;
    let n = x.len();
    let mut w = vec![1.0; n];
    let mut fit = wls(x, y, &w).ok_or(RegressionError::DegenerateX)?;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        let resid: Vec<f64> = (0..n).map(|i| y[i] - fit.intercept - fit.slope * x[i]).collect();
        let med = stats::median(&resid);
        let dev: Vec<f64> = resid.iter().map(|r| (r - med).abs()).collect();
        let scale = stats::median(&dev) / MAD_NORMAL;
        if !(scale > 0.0) {
            converged = true;
            break;
        }
        let next: Vec<f64> = resid.iter().map(|&r| bisquare(r, scale)).collect();
        let Some(refit) = wls(x, y, &next) else {
            log::warn!("robust fit: weighted regressor became degenerate after {iterations} rounds");
            break;
        };
        iterations += 1;
        let change = w.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        w = next;
        fit = refit;
        if change < TOL {
            converged = true;
            break;
        }
    }
    Ok(finish(x, y, &fit, w, iterations, converged))
}

/// Per-side statistics of one instrument; absent values were not computed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SideStats {
    pub beta: Option<f64>,
    pub h_dma: Option<f64>,
    pub h_dfa: Option<f64>,
    pub delta_alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockStats {
    pub instrument: String,
    pub buy: SideStats,
    pub sell: SideStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Beta,
    HDma,
    HDfa,
    DeltaAlpha,
}

impl Quantity {
    pub const ALL: [Quantity; 4] = [Quantity::Beta, Quantity::HDma, Quantity::HDfa, Quantity::DeltaAlpha];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::Beta => "beta",
            Quantity::HDma => "H_DMA",
            Quantity::HDfa => "H_DFA",
            Quantity::DeltaAlpha => "delta_alpha",
        }
    }

    fn of(self, s: &SideStats) -> Option<f64> {
        match self {
            Quantity::Beta => s.beta,
            Quantity::HDma => s.h_dma,
            Quantity::HDfa => s.h_dfa,
            Quantity::DeltaAlpha => s.delta_alpha,
        }
    }
}

/// Mean and sample standard deviation of one quantity across instruments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub quantity: Quantity,
    pub side: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

/// Count of instruments where the sell value exceeds the buy value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignCount {
    pub quantity: Quantity,
    pub sell_greater: usize,
    pub compared: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedRegression {
    /// `y ~ x`, e.g. `beta_s ~ beta_b`.
    pub name: String,
    pub result: Option<RegressionResult>,
    /// Why the regression could not be fitted.
    pub degenerate: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub stocks: Vec<StockStats>,
    pub spreads: Vec<Spread>,
    pub sign_counts: Vec<SignCount>,
    pub regressions: Vec<NamedRegression>,
}

fn side_label(buy: bool) -> &'static str {
    if buy {
        "b"
    } else {
        "s"
    }
}

/// Buy/sell comparison tables, sign counts, spreads and regressions.
///
/// Instruments are sorted by name first, so the input order does not matter.
/// Regressions that cannot be fitted are reported with the reason instead of
/// failing the whole report.
pub fn cross_section_report(stocks: &[StockStats]) -> Result<CrossSection, RegressionError> {
    if stocks.len() < 2 {
        return Err(RegressionError::InsufficientData { n: stocks.len(), required: 2 });
    }
    let mut stocks = stocks.to_vec();
    stocks.sort_by(|a, b| a.instrument.cmp(&b.instrument));

    let mut spreads = Vec::new();
    let mut sign_counts = Vec::new();
    for q in Quantity::ALL {
        for buy in [true, false] {
            let vals: Vec<f64> = stocks.iter().filter_map(|s| q.of(if buy { &s.buy } else { &s.sell })).collect();
            if !vals.is_empty() {
                spreads.push(Spread {
                    quantity: q,
                    side: side_label(buy).into(),
                    n: vals.len(),
                    mean: stats::mean(&vals),
                    std: if vals.len() > 1 { stats::sample_std(&vals) } else { 0.0 },
                });
            }
        }
        let pairs: Vec<(f64, f64)> = stocks.iter().filter_map(|s| Some((q.of(&s.buy)?, q.of(&s.sell)?))).collect();
        if !pairs.is_empty() {
            sign_counts.push(SignCount {
                quantity: q,
                sell_greater: pairs.iter().filter(|(b, s)| s > b).count(),
                compared: pairs.len(),
            });
        }
    }

    use Quantity::*;
    // (y quantity, y side is buy, x quantity, x side is buy)
    let specs = [
        (Beta, false, Beta, true),
        (HDma, false, HDma, true),
        (HDfa, false, HDfa, true),
        (HDfa, true, HDma, true),
        (HDfa, false, HDma, false),
        (DeltaAlpha, false, DeltaAlpha, true),
    ];
    let regressions = specs
        .iter()
        .filter_map(|&(yq, yb, xq, xb)| {
            let pick = |s: &StockStats, q: Quantity, buy: bool| q.of(if buy { &s.buy } else { &s.sell });
            let pairs: Vec<(f64, f64)> = stocks.iter().filter_map(|s| Some((pick(s, xq, xb)?, pick(s, yq, yb)?))).collect();
            if pairs.is_empty() {
                return None;
            }
            let name = format!("{}_{} ~ {}_{}", yq.name(), side_label(yb), xq.name(), side_label(xb));
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            Some(match robust_fit(&x, &y) {
                Ok(r) => NamedRegression { name, result: Some(r), degenerate: None },
                Err(e) => NamedRegression { name, result: None, degenerate: Some(e.to_string()) },
            })
        })
        .collect();

    Ok(CrossSection { stocks, spreads, sign_counts, regressions })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

impl CrossSection {
    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let width = self.stocks.iter().map(|s| s.instrument.len()).max().unwrap_or(5).max(5);
        let _ = write!(out, "{:<width$}", "stock");
        for q in Quantity::ALL {
            for b in [true, false] {
                let _ = write!(out, " {:>13}", format!("{}_{}", q.name(), side_label(b)));
            }
        }
        out.push('\n');
        for s in &self.stocks {
            let _ = write!(out, "{:<width$}", s.instrument);
            for q in Quantity::ALL {
                let _ = write!(out, " {:>13} {:>13}", cell(q.of(&s.buy)), cell(q.of(&s.sell)));
            }
            out.push('\n');
        }
        out.push('\n');
        for sp in &self.spreads {
            let _ = writeln!(out, "{:>13}_{}  mean {:.3} +/- {:.3}  (n = {})", sp.quantity.name(), sp.side, sp.mean, sp.std, sp.n);
        }
        out.push('\n');
        for c in &self.sign_counts {
            let _ = writeln!(out, "{:>13}  sell > buy in {} of {}", c.quantity.name(), c.sell_greater, c.compared);
        }
        out.push('\n');
        for r in &self.regressions {
            match (&r.result, &r.degenerate) {
                (Some(f), _) => {
                    let _ = writeln!(
                        out,
                        "{:<28} intercept {:>8.4} (p = {:.4})  slope {:>8.4} (p = {:.4})  n = {}{}",
                        r.name,
                        f.intercept,
                        f.p_intercept,
                        f.slope,
                        f.p_slope,
                        f.n,
                        if f.converged { "" } else { "  [not converged]" }
                    );
                }
                (None, reason) => {
                    let _ = writeln!(out, "{:<28} degenerate: {}", r.name, reason.as_deref().unwrap_or("unknown"));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_fit() {
        let x: Vec<f64> = (0..26).map(|i| 2.0 + 0.1 * i as f64).collect();
        let r = robust_fit(&x, &x).unwrap();
        assert!((r.slope - 1.0).abs() < 1e-12);
        assert!(r.intercept.abs() < 1e-12);
        assert!(r.p_slope < 1e-6);
        assert!(r.converged);
        assert!(r.weights.iter().all(|w| (0.0..=1.0).contains(w)));
    }

    #[test]
    fn closed_form_ols() {
        // x = 1..5, y = 2, 4, 5, 4, 5: slope 0.6, intercept 2.2, rss 2.4.
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [2.0, 4.0, 5.0, 4.0, 5.0];
        let r = ols_fit(&x, &y).unwrap();
        assert!((r.slope - 0.6).abs() < 1e-12);
        assert!((r.intercept - 2.2).abs() < 1e-12);
        assert!((r.slope_stderr - (0.8f64 / 10.0).sqrt()).abs() < 1e-12);
        assert!((r.intercept_stderr - (0.8f64 * (0.2 + 9.0 / 10.0)).sqrt()).abs() < 1e-12);
        // t = 0.6 / sqrt(0.08) = 2.1213 with 3 df.
        assert!((r.p_slope - 0.1240).abs() < 5e-4, "{}", r.p_slope);
    }

    #[test]
    fn input_errors() {
        assert_eq!(robust_fit(&[1.0, 2.0], &[1.0, 2.0]).unwrap_err(), RegressionError::InsufficientData { n: 2, required: 3 });
        assert_eq!(robust_fit(&[1.0; 4], &[1.0, 2.0, 3.0, 4.0]).unwrap_err(), RegressionError::DegenerateX);
        assert_eq!(robust_fit(&[1.0, 2.0, 3.0], &[1.0, 2.0]).unwrap_err(), RegressionError::LengthMismatch(3, 2));
        assert_eq!(robust_fit(&[1.0, f64::NAN, 3.0], &[1.0, 2.0, 3.0]).unwrap_err(), RegressionError::NonFinite);
    }

    #[test]
    fn outlier_is_downweighted() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let mut y: Vec<f64> = x.iter().map(|v| 1.0 + 0.5 * v + 0.01 * ((v * 7.0) % 3.0 - 1.0)).collect();
        y[15] += 50.0;
        let r = robust_fit(&x, &y).unwrap();
        let o = ols_fit(&x, &y).unwrap();
        assert_eq!(r.weights[15], 0.0);
        assert!((r.slope - 0.5).abs() < (o.slope - 0.5).abs());
        assert!((r.slope - 0.5).abs() < 0.01);
    }

    #[test]
    fn agrees_with_ols_on_gaussian_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mut rs, mut os) = (0.0, 0.0);
        for _ in 0..100 {
            let x: Vec<f64> = (0..50).map(|_| rng.gen_range(0.0..10.0)).collect();
            let y: Vec<f64> = x.iter().map(|v| 2.0 * v + rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
            rs += robust_fit(&x, &y).unwrap().slope;
            os += ols_fit(&x, &y).unwrap().slope;
        }
        assert!((rs / os - 1.0).abs() < 0.01);
    }

    fn side(beta: f64, h: f64) -> SideStats {
        SideStats { beta: Some(beta), h_dma: Some(h), h_dfa: Some(h + 0.01), delta_alpha: None }
    }

    #[test]
    fn identical_stocks_are_flagged() {
        let s = StockStats { instrument: "A".into(), buy: side(3.0, 0.7), sell: side(3.1, 0.72) };
        let mut t = s.clone();
        t.instrument = "B".into();
        let r = cross_section_report(&[s, t]).unwrap();
        assert_eq!(r.regressions.len(), 5);
        assert!(r.regressions.iter().all(|g| g.result.is_none() && g.degenerate.is_some()));
        assert!(r.to_text().contains("degenerate"));
        assert_eq!(cross_section_report(&r.stocks[..1]).unwrap_err(), RegressionError::InsufficientData { n: 1, required: 2 });
    }

    #[test]
    fn spreads_match_direct_computation() {
        let rows = [("X", 2.0, 2.5, 0.70, 0.75), ("Y", 3.0, 2.9, 0.80, 0.78), ("Z", 4.0, 4.4, 0.60, 0.71)];
        let stocks: Vec<StockStats> =
            rows.iter().map(|&(n, bb, bs, hb, hs)| StockStats { instrument: n.into(), buy: side(bb, hb), sell: side(bs, hs) }).collect();
        let r = cross_section_report(&stocks).unwrap();
        let beta_b = r.spreads.iter().find(|s| s.quantity == Quantity::Beta && s.side == "b").unwrap();
        assert!((beta_b.mean - 3.0).abs() < 1e-12);
        assert!((beta_b.std - 1.0).abs() < 1e-12);
        let hs = r.spreads.iter().find(|s| s.quantity == Quantity::HDma && s.side == "s").unwrap();
        let m = (0.75 + 0.78 + 0.71) / 3.0;
        let sd = (((0.75f64 - m).powi(2) + (0.78 - m).powi(2) + (0.71 - m).powi(2)) / 2.0).sqrt();
        assert!((hs.mean - m).abs() < 1e-12 && (hs.std - sd).abs() < 1e-12);
        let c = r.sign_counts.iter().find(|c| c.quantity == Quantity::HDma).unwrap();
        assert_eq!((c.sell_greater, c.compared), (2, 3));
        let mut reversed = stocks.clone();
        reversed.reverse();
        assert_eq!(cross_section_report(&reversed).unwrap(), r);
    }

    proptest! {
        #[test]
        fn affine_equivariance(a in 0.1f64..10.0, b in -5.0f64..5.0, seed: u64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..30).map(|_| rng.gen_range(0.0..5.0)).collect();
            let y: Vec<f64> = x.iter().map(|v| 1.0 - 0.3 * v + rng.gen_range(-1.0..1.0)).collect();
            let ay: Vec<f64> = y.iter().map(|v| a * v + b).collect();
            let r = robust_fit(&x, &y).unwrap();
            let s = robust_fit(&x, &ay).unwrap();
            prop_assert!((s.slope - a * r.slope).abs() < 1e-6 * a.max(1.0));
            prop_assert!((s.intercept - (a * r.intercept + b)).abs() < 1e-6 * a.max(1.0));
        }
    }
}
