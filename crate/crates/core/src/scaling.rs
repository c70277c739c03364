//! Hurst exponents from detrended fluctuation analysis (DFA) and detrending
//! moving averages (DMA).
//!
//! Both methods work on the profile `G(t) = sum_{j<=t} (g(j) - <g>)`, remove a
//! local trend at scale `s`, and measure the r.m.s. residual `F(s)`. For a
//! fractal series `F(s) ~ s^H`; `H` is the slope of `ln F` against `ln s`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detrend::box_variances;
use crate::stats::line_fit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ScalingError {
    #[error("series has {0} points, at least 2 required")]
    TooShort(usize),
    #[error("scale {scale} is outside [{min}, {max}]")]
    ScaleOutOfRange { scale: usize, min: usize, max: usize },
    #[error("centred moving average needs an odd window, got {0}")]
    EvenScaleForCentered(usize),
    #[error("only {found} usable scales in the fit range, at least 5 required")]
    TooFewScales { found: usize },
    #[error("detrending order {0} not supported (0..=3)")]
    UnsupportedOrder(usize),
    #[error("series contains non-finite values")]
    NonFinite,
}

/// Mean-centred cumulative sum of a series.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    values: Vec<f64>,
}

impl Profile {
    /// Wraps an already integrated series.
    pub fn from_values(values: Vec<f64>) -> Self {
        Profile { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn build_profile(series: &[f64]) -> Result<Profile, ScalingError> {
    if series.len() < 2 {
        return Err(ScalingError::TooShort(series.len()));
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(ScalingError::NonFinite);
    }
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let mut acc = 0.0;
    let values = series
        .iter()
        .map(|x| {
            acc += x - mean;
            acc
        })
        .collect();
    Ok(Profile { values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DmaMode {
    Centered,
    Backward,
    Forward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Method {
    Dfa { order: usize },
    Dma { mode: DmaMode },
}

/// `F(s)` over a scale grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationCurve {
    pub method: Method,
    pub q: f64,
    pub scales: Vec<usize>,
    pub fluctuation: Vec<f64>,
    /// Boxes (DFA) or window positions (DMA) behind each point.
    pub boxes: Vec<usize>,
    /// Zero-fluctuation boxes left out of each point (only for q <= 0).
    pub excluded: Vec<usize>,
}

impl FluctuationCurve {
    /// Scales whose fluctuation vanished and that are skipped by the fit.
    pub fn degenerate_scales(&self) -> Vec<usize> {
        self.scales.iter().zip(&self.fluctuation).filter(|(_, f)| !(**f > 0.0)).map(|(s, _)| *s).collect()
    }
}

/// Least-squares fit of `ln F = c + H ln s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurstEstimate {
    pub h: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub fit_range: (usize, usize),
    pub r_squared: f64,
    pub n_scales: usize,
}

fn check_scales(scales: &[usize], min: usize, max: usize) -> Result<(), ScalingError> {
    for &s in scales {
        if s < min || s > max {
            return Err(ScalingError::ScaleOutOfRange { scale: s, min, max });
        }
    }
    Ok(())
}

/// Root-mean of box variances, i.e. the q = 2 aggregate. MF-DFA at q = 2 calls
/// this same function.
pub(crate) fn rms_of_variances(vars: &[f64]) -> f64 {
    (vars.iter().sum::<f64>() / vars.len() as f64).sqrt()
}

/// DFA of the given polynomial order.
///
/// Every scale must satisfy `order + 2 <= s <= N / 4`.
pub fn dfa_fluctuation(profile: &Profile, scales: &[usize], order: usize) -> Result<FluctuationCurve, ScalingError> {
    if order > 3 {
        return Err(ScalingError::UnsupportedOrder(order));
    }
    check_scales(scales, order + 2, profile.len() / 4)?;
    let mut curve = FluctuationCurve {
        method: Method::Dfa { order },
        q: 2.0,
        scales: scales.to_vec(),
        fluctuation: Vec::with_capacity(scales.len()),
        boxes: Vec::with_capacity(scales.len()),
        excluded: vec![0; scales.len()],
    };
    for &s in scales {
        let vars = box_variances(profile.values(), s, order);
        curve.fluctuation.push(rms_of_variances(&vars));
        curve.boxes.push(vars.len());
    }
    let flat = curve.degenerate_scales();
    if !flat.is_empty() {
        log::warn!("DFA: profile perfectly detrended at scales {flat:?}; excluded from the fit");
    }
    Ok(curve)
}

/// Detrending moving average.
///
/// The trend at `t` is the mean of `G` over a window of `s` points: centred on
/// `t` (odd `s`), ending at `t` (backward) or starting at `t` (forward).
/// Positions whose window does not fit in the record are skipped, and `F(s)`
/// is the r.m.s. residual over the remaining positions.
pub fn dma_fluctuation(profile: &Profile, scales: &[usize], mode: DmaMode) -> Result<FluctuationCurve, ScalingError> {
    let g = profile.values();
    let n = g.len();
    let min = if mode == DmaMode::Centered { 3 } else { 2 };
    check_scales(scales, min, n / 4)?;
    if mode == DmaMode::Centered {
        if let Some(&s) = scales.iter().find(|&&s| s % 2 == 0) {
            return Err(ScalingError::EvenScaleForCentered(s));
        }
    }
    // Prefix sums of G relative to G(0); a constant profile then detrends to
    // exactly zero.
    let origin = g.first().copied().unwrap_or(0.0);
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &x in g {
        acc += x - origin;
        prefix.push(acc);
    }
    let mut curve = FluctuationCurve {
        method: Method::Dma { mode },
        q: 2.0,
        scales: scales.to_vec(),
        fluctuation: Vec::with_capacity(scales.len()),
        boxes: Vec::with_capacity(scales.len()),
        excluded: vec![0; scales.len()],
    };
    for &s in scales {
        // window for position t is [t - back, t - back + s)
        let back = match mode {
            DmaMode::Centered => (s - 1) / 2,
            DmaMode::Backward => s - 1,
            DmaMode::Forward => 0,
        };
        let positions = n - s + 1;
        let mut ss = 0.0;
        for start in 0..positions {
            let t = start + back;
            let avg = (prefix[start + s] - prefix[start]) / s as f64;
            let e = (g[t] - origin) - avg;
            ss += e * e;
        }
        curve.fluctuation.push((ss / positions as f64).sqrt());
        curve.boxes.push(positions);
    }
    Ok(curve)
}

/// Fits `H` over the scales in `fit_range` (inclusive; all scales when `None`)
/// whose fluctuation is positive.
pub fn fit_hurst(curve: &FluctuationCurve, fit_range: Option<(usize, usize)>) -> Result<HurstEstimate, ScalingError> {
    let (lo, hi) = fit_range.unwrap_or((0, usize::MAX));
    let (x, y): (Vec<f64>, Vec<f64>) = curve
        .scales
        .iter()
        .zip(&curve.fluctuation)
        .filter(|(&s, &f)| s >= lo && s <= hi && f > 0.0 && f.is_finite())
        .map(|(&s, &f)| ((s as f64).ln(), f.ln()))
        .unzip();
    if x.len() < 5 {
        return Err(ScalingError::TooFewScales { found: x.len() });
    }
    let fit = line_fit(&x, &y).ok_or(ScalingError::TooFewScales { found: x.len() })?;
    let used: Vec<usize> = curve.scales.iter().copied().filter(|&s| s >= lo && s <= hi).collect();
    Ok(HurstEstimate {
        h: fit.slope,
        stderr: fit.slope_stderr,
        intercept: fit.intercept,
        fit_range: (*used.first().unwrap(), *used.last().unwrap()),
        r_squared: fit.r_squared,
        n_scales: x.len(),
    })
}

/// About `count` logarithmically spaced distinct integers in `[min, max]`.
pub fn log_scales(min: usize, max: usize, count: usize) -> Vec<usize> {
    if min == 0 || max < min || count == 0 {
        return Vec::new();
    }
    if count == 1 || max == min {
        return vec![min];
    }
    let (a, b) = ((min as f64).ln(), (max as f64).ln());
    let mut out: Vec<usize> = (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp().round() as usize)
        .map(|s| s.clamp(min, max))
        .collect();
    out.dedup();
    out
}

/// Forces every scale odd (rounding up) for the centred moving average.
pub fn odd_scales(scales: &[usize], max: usize) -> Vec<usize> {
    let mut out: Vec<usize> =
        scales.iter().map(|&s| if s % 2 == 0 { s + 1 } else { s }).map(|s| if s > max { s - 2 } else { s }).collect();
    out.dedup();
    out
}

/// Scale grid and fit window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingConfig {
    pub dfa_order: usize,
    pub dma_mode: DmaMode,
    pub min_scale: usize,
    /// Largest scale as a fraction of the series length.
    pub max_scale_fraction: f64,
    pub n_scales: usize,
    /// Explicit grid; overrides the three fields above.
    pub scales: Option<Vec<usize>>,
    pub fit_range: Option<(usize, usize)>,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            dfa_order: 1,
            dma_mode: DmaMode::Centered,
            min_scale: 10,
            max_scale_fraction: 0.1,
            n_scales: 30,
            scales: None,
            fit_range: None,
        }
    }
}

impl ScalingConfig {
    pub fn scales_for(&self, n: usize) -> Vec<usize> {
        match &self.scales {
            Some(s) => s.clone(),
            None => log_scales(self.min_scale, (n as f64 * self.max_scale_fraction) as usize, self.n_scales),
        }
    }

    fn dma_scales(&self, n: usize) -> Vec<usize> {
        let base = self.scales_for(n);
        match self.dma_mode {
            DmaMode::Centered => odd_scales(&base, n / 4),
            _ => base,
        }
    }
}

/// DFA curve and Hurst estimate of a raw series.
pub fn hurst_dfa(series: &[f64], cfg: &ScalingConfig) -> Result<(FluctuationCurve, HurstEstimate), ScalingError> {
    let profile = build_profile(series)?;
    let curve = dfa_fluctuation(&profile, &cfg.scales_for(series.len()), cfg.dfa_order)?;
    let est = fit_hurst(&curve, cfg.fit_range)?;
    Ok((curve, est))
}

/// DMA curve and Hurst estimate of a raw series.
pub fn hurst_dma(series: &[f64], cfg: &ScalingConfig) -> Result<(FluctuationCurve, HurstEstimate), ScalingError> {
    let profile = build_profile(series)?;
    let curve = dma_fluctuation(&profile, &cfg.dma_scales(series.len()), cfg.dma_mode)?;
    let est = fit_hurst(&curve, cfg.fit_range)?;
    Ok((curve, est))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect()
    }

    #[test]
    fn profile_of_three_terms() {
        assert_eq!(build_profile(&[1.0, 2.0, 3.0]).unwrap().values(), &[-1.0, -1.0, 0.0]);
        assert!(build_profile(&[4.0; 9]).unwrap().values().iter().all(|&v| v == 0.0));
        assert_eq!(build_profile(&[1.0]), Err(ScalingError::TooShort(1)));
    }

    #[test]
    fn profile_closes_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..1000).map(|_| rng.gen_range(-5.0..50.0)).collect();
        let max = xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let last = *build_profile(&xs).unwrap().values().last().unwrap();
        assert!(last.abs() <= 1e-9 * 1000.0 * max);
    }

    #[test]
    fn linear_profile_detrends_to_zero() {
        let p = Profile::from_values((0..400).map(|t| 0.3 * t as f64 - 7.0).collect());
        let c = dfa_fluctuation(&p, &[5, 10, 20, 40, 80, 100], 1).unwrap();
        assert!(c.fluctuation.iter().all(|&f| f == 0.0));
        assert_eq!(c.degenerate_scales().len(), 6);
        assert_eq!(fit_hurst(&c, None), Err(ScalingError::TooFewScales { found: 0 }));
    }

    #[test]
    fn constant_profile_has_no_dma_fluctuation() {
        let p = Profile::from_values(vec![2.5; 300]);
        for mode in [DmaMode::Centered, DmaMode::Backward, DmaMode::Forward] {
            let c = dma_fluctuation(&p, &[3, 11, 51], mode).unwrap();
            assert!(c.fluctuation.iter().all(|&f| f == 0.0), "{mode:?}");
        }
    }

    #[test]
    fn scale_validation() {
        let p = build_profile(&noise(100, 1)).unwrap();
        assert_eq!(
            dfa_fluctuation(&p, &[2], 1),
            Err(ScalingError::ScaleOutOfRange { scale: 2, min: 3, max: 25 })
        );
        assert!(matches!(dfa_fluctuation(&p, &[26], 1), Err(ScalingError::ScaleOutOfRange { .. })));
        assert_eq!(dma_fluctuation(&p, &[10], DmaMode::Centered), Err(ScalingError::EvenScaleForCentered(10)));
        assert!(dma_fluctuation(&p, &[10], DmaMode::Backward).is_ok());
        assert_eq!(dfa_fluctuation(&p, &[10], 4), Err(ScalingError::UnsupportedOrder(4)));
    }

    #[test]
    fn box_count_doubles_when_scale_does_not_divide() {
        let p = build_profile(&noise(1000, 2)).unwrap();
        let c = dfa_fluctuation(&p, &[10, 30], 1).unwrap();
        assert_eq!(c.boxes, vec![100, 66]);
    }

    #[test]
    fn exact_power_law_curve() {
        let scales: Vec<usize> = vec![10, 20, 40, 80, 160, 320];
        let curve = FluctuationCurve {
            method: Method::Dfa { order: 1 },
            q: 2.0,
            fluctuation: scales.iter().map(|&s| 1.7 * (s as f64).powf(0.7)).collect(),
            boxes: vec![1; 6],
            excluded: vec![0; 6],
            scales,
        };
        let h = fit_hurst(&curve, None).unwrap();
        assert!((h.h - 0.7).abs() < 1e-12);
        assert!(h.stderr < 1e-12);
        let sub = fit_hurst(&curve, Some((20, 320))).unwrap();
        assert_eq!(sub.fit_range, (20, 320));
        assert_eq!(sub.n_scales, 5);
        assert!(fit_hurst(&curve, Some((40, 320))).is_err());
    }

    #[test]
    fn noisy_curve_slope_matches_closed_form() {
        // Normal equations solved by hand on log-log points with alternating
        // multiplicative noise that grows with s.
        let scales: Vec<usize> = vec![8, 16, 32, 64, 128, 256, 512];
        let f: Vec<f64> = scales
            .iter()
            .enumerate()
            .map(|(i, &s)| (s as f64).powf(0.6) * (1.0 + 0.02 * (i as f64 + 1.0) * if i % 2 == 0 { 1.0 } else { -1.0 }))
            .collect();
        let x: Vec<f64> = scales.iter().map(|&s| (s as f64).ln()).collect();
        let y: Vec<f64> = f.iter().map(|v| v.ln()).collect();
        let n = x.len() as f64;
        let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let want = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let curve = FluctuationCurve {
            method: Method::Dfa { order: 1 },
            q: 2.0,
            scales,
            fluctuation: f,
            boxes: vec![1; 7],
            excluded: vec![0; 7],
        };
        assert!((fit_hurst(&curve, None).unwrap().h - want).abs() < 1e-12);
    }

    #[test]
    fn white_noise_is_uncorrelated() {
        let xs = noise(100_000, 17);
        let cfg = ScalingConfig::default();
        let (_, dfa) = hurst_dfa(&xs, &cfg).unwrap();
        let (_, dma) = hurst_dma(&xs, &cfg).unwrap();
        assert!((dfa.h - 0.5).abs() < 0.03, "DFA {}", dfa.h);
        assert!((dma.h - 0.5).abs() < 0.03, "DMA {}", dma.h);
    }

    #[test]
    fn order_zero_matches_box_variance_about_the_mean() {
        let xs = noise(200, 4);
        let p = build_profile(&xs).unwrap();
        let s = 20;
        let c = dfa_fluctuation(&p, &[s], 0).unwrap();
        let g = p.values();
        let mut acc = 0.0;
        for b in g.chunks(s) {
            let m = b.iter().sum::<f64>() / s as f64;
            acc += b.iter().map(|v| (v - m).powi(2)).sum::<f64>() / s as f64;
        }
        let want = (acc / 10.0).sqrt();
        assert!((c.fluctuation[0] - want).abs() < 1e-12 * want);
    }

    #[test]
    fn log_scale_grid() {
        let s = log_scales(10, 13107, 30);
        assert_eq!(s.first(), Some(&10));
        assert_eq!(s.last(), Some(&13107));
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(s.len(), 30);
        assert!(odd_scales(&s, 20000).iter().all(|v| v % 2 == 1));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn shift_and_scale_invariance(seed in 0u64..500, shift in -100.0f64..100.0, c in 0.01f64..100.0) {
            let xs = noise(2000, seed);
            let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
            let scaled: Vec<f64> = xs.iter().map(|x| -c * x).collect();
            let scales = log_scales(10, 200, 10);
            let p0 = build_profile(&xs).unwrap();
            let p1 = build_profile(&shifted).unwrap();
            let p2 = build_profile(&scaled).unwrap();
            for (a, b) in [(dfa_fluctuation(&p0, &scales, 1).unwrap(), dfa_fluctuation(&p1, &scales, 1).unwrap())] {
                for (x, y) in a.fluctuation.iter().zip(&b.fluctuation) {
                    prop_assert!((x - y).abs() <= 1e-9 * x);
                }
            }
            let a = dfa_fluctuation(&p0, &scales, 1).unwrap();
            let b = dfa_fluctuation(&p2, &scales, 1).unwrap();
            for (x, y) in a.fluctuation.iter().zip(&b.fluctuation) {
                prop_assert!((c * x - y).abs() <= 1e-9 * y);
            }
            let ha = fit_hurst(&a, None).unwrap().h;
            let hb = fit_hurst(&b, None).unwrap().h;
            prop_assert!((ha - hb).abs() < 1e-9);
            let odd = odd_scales(&scales, 500);
            let da = dma_fluctuation(&p0, &odd, DmaMode::Centered).unwrap();
            let db = dma_fluctuation(&p1, &odd, DmaMode::Centered).unwrap();
            for (x, y) in da.fluctuation.iter().zip(&db.fluctuation) {
                prop_assert!((x - y).abs() <= 1e-8 * x);
            }
        }
    }
}
