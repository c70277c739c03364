//! Plot-ready CSV tables derived from finished reports. No rendering here.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::pipeline::{gap_file, load_reports, read_series, InstrumentReport, SERIES_FILE};
use crate::PipelineError;
use lobgap_core::{GapSeries, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    /// Log-binned gap PDF with the fitted tail.
    Pdf,
    /// DFA and DMA `F(s)`.
    Fluctuation,
    /// MF-DFA `F_q(s)` for every q.
    Fq,
    /// `h(q)`, `tau(q)` and `f(alpha)`.
    Spectrum,
    /// Buy versus sell statistics across instruments.
    Scatter,
}

impl PlotKind {
    pub const ALL: [PlotKind; 5] = [PlotKind::Pdf, PlotKind::Fluctuation, PlotKind::Fq, PlotKind::Spectrum, PlotKind::Scatter];
}

/// One bin of a log-binned density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdfBin {
    pub left: f64,
    pub right: f64,
    /// Geometric bin centre.
    pub center: f64,
    pub density: f64,
    pub count: usize,
}

/// Density estimate on logarithmically spaced bins. Non-positive values are
/// ignored; empty bins are dropped.
pub fn log_binned_pdf(values: &[f64], bins_per_decade: usize) -> Vec<PdfBin> {
    let pos: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0 && v.is_finite()).collect();
    if pos.is_empty() || bins_per_decade == 0 {
        return Vec::new();
    }
    let lo = pos.iter().copied().fold(f64::INFINITY, f64::min).log10().floor();
    let hi = pos.iter().copied().fold(0.0, f64::max).log10();
    let n_bins = (((hi - lo) * bins_per_decade as f64).floor() as usize + 1).max(1);
    let width = 1.0 / bins_per_decade as f64;
    let mut counts = vec![0usize; n_bins];
    for v in &pos {
        let k = ((v.log10() - lo) / width).floor() as usize;
        counts[k.min(n_bins - 1)] += 1;
    }
    let total = values.len() as f64;
    counts
        .iter()
        .enumerate()
        .filter(|(_, c)| **c > 0)
        .map(|(k, &c)| {
            let left = 10f64.powf(lo + k as f64 * width);
            let right = 10f64.powf(lo + (k + 1) as f64 * width);
            PdfBin { left, right, center: (left * right).sqrt(), density: c as f64 / (total * (right - left)), count: c }
        })
        .collect()
}

fn write_file(path: &Path, text: &str) -> Result<(), PipelineError> {
    fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

fn missing(r: &InstrumentReport, section: &str) -> PipelineError {
    PipelineError::MissingAnalysis { instrument: r.instrument.clone(), section: section.to_string() }
}

fn side_values(out: &Path, r: &InstrumentReport, side: &str) -> Result<Vec<f64>, PipelineError> {
    let dir = out.join(&r.instrument);
    if side == "series" {
        return read_series(&dir.join(SERIES_FILE));
    }
    let s = if side == "buy" { Side::Buy } else { Side::Sell };
    let path = dir.join(gap_file(s));
    if !path.is_file() {
        return Err(missing(r, &format!("{} (gap file)", gap_file(s))));
    }
    let file = fs::File::open(&path).map_err(|e| PipelineError::io(&path, e))?;
    GapSeries::read_csv(file)
        .map(|g| g.defined_gaps())
        .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
}

fn pdf_table(out: &Path, r: &InstrumentReport) -> Result<String, PipelineError> {
    let mut s = String::from("side,bin_left,bin_right,center,density,count,fit_density\n");
    for (side, rep) in &r.sides {
        let fit = rep.powerlaw.ok_or_else(|| missing(r, &format!("powerlaw ({side})")))?;
        let values = side_values(out, r, side)?;
        let frac = fit.n_tail as f64 / fit.n_sample.max(1) as f64;
        for b in log_binned_pdf(&values, 10) {
            let fitted = if b.center >= fit.g_min {
                format!("{:e}", frac * fit.beta / fit.g_min * (b.center / fit.g_min).powf(-fit.beta - 1.0))
            } else {
                String::new()
            };
            s += &format!("{side},{:e},{:e},{:e},{:e},{},{fitted}\n", b.left, b.right, b.center, b.density, b.count);
        }
    }
    Ok(s)
}

fn fluctuation_table(r: &InstrumentReport) -> Result<String, PipelineError> {
    let mut s = String::from("side,method,scale,fluctuation\n");
    for (side, rep) in &r.sides {
        let curves = [("dfa", &rep.dfa), ("dma", &rep.dma)];
        if curves.iter().all(|(_, c)| c.is_none()) {
            return Err(missing(r, &format!("dfa/dma ({side})")));
        }
        for (name, c) in curves {
            if let Some(c) = c {
                for (sc, f) in c.curve.scales.iter().zip(&c.curve.fluctuation) {
                    s += &format!("{side},{name},{sc},{f:e}\n");
                }
            }
        }
    }
    Ok(s)
}

fn fq_table(r: &InstrumentReport) -> Result<String, PipelineError> {
    let mut s = String::from("side,q,scale,fluctuation\n");
    for (side, rep) in &r.sides {
        let m = rep.mfdfa.as_ref().ok_or_else(|| missing(r, &format!("mfdfa ({side})")))?;
        for c in &m.curves {
            for (sc, f) in c.scales.iter().zip(&c.fluctuation) {
                s += &format!("{side},{},{sc},{f:e}\n", c.q);
            }
        }
    }
    Ok(s)
}

fn spectrum_table(r: &InstrumentReport) -> Result<String, PipelineError> {
    let mut s = String::from("side,q,h,tau,alpha,f_alpha,unreliable\n");
    for (side, rep) in &r.sides {
        let m = &rep.mfdfa.as_ref().ok_or_else(|| missing(r, &format!("mfdfa ({side})")))?.spectrum;
        for i in 0..m.q.len() {
            s += &format!(
                "{side},{},{:e},{:e},{:e},{:e},{}\n",
                m.q[i], m.h[i], m.tau[i], m.alpha[i], m.f_alpha[i], u8::from(m.unreliable[i])
            );
        }
    }
    Ok(s)
}

fn scatter_table(reports: &[InstrumentReport]) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    let mut s = String::from("instrument,beta_b,beta_s,h_dma_b,h_dma_s,h_dfa_b,h_dfa_s,delta_alpha_b,delta_alpha_s\n");
    for st in reports.iter().filter_map(|r| r.stock_stats()) {
        let (b, x) = (st.buy, st.sell);
        s += &format!(
            "{},{},{},{},{},{},{},{},{}\n",
            st.instrument,
            opt(b.beta),
            opt(x.beta),
            opt(b.h_dma),
            opt(x.h_dma),
            opt(b.h_dfa),
            opt(x.h_dfa),
            opt(b.delta_alpha),
            opt(x.delta_alpha)
        );
    }
    s
}

/// Writes `<out>/<instrument>/plot/<kind>.csv` for every instrument and
/// `<out>/plot/scatter.csv`. Returns the files written.
pub fn emit_plot_data(out: &Path, kinds: &[PlotKind]) -> Result<Vec<std::path::PathBuf>, PipelineError> {
    let reports = load_reports(out)?;
    if reports.is_empty() {
        return Err(PipelineError::InsufficientData(format!("no reports under {}", out.display())));
    }
    let mut written = Vec::new();
    for r in &reports {
        let dir = out.join(&r.instrument).join("plot");
        for &kind in kinds {
            let (name, text) = match kind {
                PlotKind::Pdf => ("pdf.csv", pdf_table(out, r)?),
                PlotKind::Fluctuation => ("fluctuation.csv", fluctuation_table(r)?),
                PlotKind::Fq => ("fq.csv", fq_table(r)?),
                PlotKind::Spectrum => ("spectrum.csv", spectrum_table(r)?),
                PlotKind::Scatter => continue,
            };
            fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
            write_file(&dir.join(name), &text)?;
            written.push(dir.join(name));
        }
    }
    if kinds.contains(&PlotKind::Scatter) {
        let dir = out.join("plot");
        fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
        let path = dir.join("scatter.csv");
        let mut f = fs::File::create(&path).map_err(|e| PipelineError::io(&path, e))?;
        f.write_all(scatter_table(&reports).as_bytes()).map_err(|e| PipelineError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use lobgap_core::stats::line_fit;
    use lobgap_core::synth::gen_pareto;

    #[test]
    fn pdf_slope_matches_the_tail_exponent() {
        let beta = 2.5;
        let xs = gen_pareto(beta, 1.0, 200_000, 4).unwrap();
        let bins: Vec<PdfBin> = log_binned_pdf(&xs, 10).into_iter().filter(|b| b.left >= 1.0 && b.right <= 10.0).collect();
        assert!(bins.len() >= 8);
        let x: Vec<f64> = bins.iter().map(|b| b.center.ln()).collect();
        let y: Vec<f64> = bins.iter().map(|b| b.density.ln()).collect();
        let fit = line_fit(&x, &y).unwrap();
        assert!((fit.slope + beta + 1.0).abs() < 0.1, "{}", fit.slope);
    }

    #[test]
    fn densities_integrate_to_one() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64 / 7.0).collect();
        let total: f64 = log_binned_pdf(&xs, 5).iter().map(|b| b.density * (b.right - b.left)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_input_gives_no_bins() {
        assert!(log_binned_pdf(&[], 10).is_empty());
        assert!(log_binned_pdf(&[-1.0, 0.0], 10).is_empty());
    }
}
