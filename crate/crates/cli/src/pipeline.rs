use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use lobgap_core::engine::{extract_gap_series_days, summarize_gaps, Replay};
use lobgap_core::multifractal::{mfdfa, MultifractalSpectrum};
use lobgap_core::orderflow::{read_session_file, session_key};
use lobgap_core::powerlaw::{bootstrap_p_value, fit_power_law, PowerLawFit};
use lobgap_core::regress::{cross_section_report, CrossSection, SideStats, StockStats};
use lobgap_core::scaling::{hurst_dfa, hurst_dma, FluctuationCurve, HurstEstimate};
use lobgap_core::surrogates::{surrogate_test, Statistic, SurrogateReport};
use lobgap_core::synth::Generated;
use lobgap_core::{GapSeries, GapSummary, SessionStream, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Input, PipelineConfig};
use crate::PipelineError;

pub const REPORT_FILE: &str = "report.json";
pub const SERIES_FILE: &str = "series.txt";
pub const CROSS_SECTION_JSON: &str = "cross_section.json";
pub const CROSS_SECTION_TXT: &str = "cross_section.txt";
pub const ENSEMBLE_FILE: &str = "ensemble.json";
pub const ERRORS_FILE: &str = "errors.json";

pub fn gap_file(side: Side) -> String {
    format!("gaps_{}.csv", side.as_str())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayInfo {
    pub days: Vec<String>,
    pub events: u64,
    pub fills: u64,
    pub unknown_cancels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub curve: FluctuationCurve,
    pub estimate: HurstEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfdfaResult {
    pub curves: Vec<FluctuationCurve>,
    pub spectrum: MultifractalSpectrum,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SideReport {
    pub n_observations: usize,
    pub n_values: usize,
    pub summary: Option<GapSummary>,
    pub powerlaw: Option<PowerLawFit>,
    pub bootstrap_failed_refits: Option<usize>,
    pub dfa: Option<ScalingResult>,
    pub dma: Option<ScalingResult>,
    pub mfdfa: Option<MfdfaResult>,
    pub surrogates: Vec<SurrogateReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentReport {
    pub instrument: String,
    /// `order_flow`, `gaps` or `series`.
    pub source: String,
    pub config: serde_json::Value,
    pub replay: Option<ReplayInfo>,
    /// Keyed by `buy`, `sell` or `series`.
    pub sides: BTreeMap<String, SideReport>,
}

impl InstrumentReport {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    /// Buy/sell statistics for the cross-section, if both sides exist.
    pub fn stock_stats(&self) -> Option<StockStats> {
        let pick = |s: &SideReport| SideStats {
            beta: s.powerlaw.map(|f| f.beta),
            h_dma: s.dma.as_ref().map(|r| r.estimate.h),
            h_dfa: s.dfa.as_ref().map(|r| r.estimate.h),
            delta_alpha: s.mfdfa.as_ref().map(|r| r.spectrum.delta_alpha),
        };
        Some(StockStats {
            instrument: self.instrument.clone(),
            buy: pick(self.sides.get("buy")?),
            sell: pick(self.sides.get("sell")?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub instrument: String,
    pub side: Option<String>,
    pub module: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub config: serde_json::Value,
    pub instruments: Vec<String>,
    pub fits: BTreeMap<String, PowerLawFit>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub instruments: Vec<String>,
    pub errors: Vec<ErrorRecord>,
    pub cross_section: bool,
}

enum Source {
    OrderFlow(Vec<SessionStream>),
    Gaps(Vec<GapSeries>),
    Series(Vec<f64>),
}

struct Job {
    name: String,
    source: Source,
}

fn err(instrument: &str, side: Option<&str>, module: &str, message: impl ToString) -> ErrorRecord {
    ErrorRecord {
        instrument: instrument.to_string(),
        side: side.map(str::to_string),
        module: module.to_string(),
        message: message.to_string(),
    }
}

fn csv_files(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| PipelineError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    Ok(files)
}

/// Reads a one-column series; blank lines and `#` comments are skipped.
pub fn read_series(path: &Path) -> Result<Vec<f64>, PipelineError> {
    let file = fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| PipelineError::io(path, e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let v: f64 = t
            .parse()
            .map_err(|_| PipelineError::Config(format!("{}:{}: not a number: {t}", path.display(), i + 1)))?;
        out.push(v);
    }
    Ok(out)
}

pub fn write_series(path: &Path, values: &[f64]) -> Result<(), PipelineError> {
    let file = fs::File::create(path).map_err(|e| PipelineError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for v in values {
        writeln!(w, "{v}").map_err(|e| PipelineError::io(path, e))?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

fn collect_jobs(cfg: &PipelineConfig, errors: &mut Vec<ErrorRecord>) -> Result<Vec<Job>, PipelineError> {
    let mut order_flow: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    let mut gaps: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    let mut jobs = Vec::new();
    for (idx, input) in cfg.inputs.iter().enumerate() {
        match input {
            Input::OrderFlow { path } => {
                let files = if path.is_dir() { csv_files(path)? } else { vec![path.clone()] };
                for f in files {
                    let inst = session_key(&f)
                        .map(|k| k.0)
                        .or_else(|| f.file_stem().and_then(|s| s.to_str()).map(str::to_string))
                        .unwrap_or_else(|| "unknown".into());
                    order_flow.entry(inst).or_default().push(f);
                }
            }
            Input::Gaps { path } => {
                let inst = path
                    .parent()
                    .and_then(|p| p.file_name())
                    .and_then(|s| s.to_str())
                    .unwrap_or("gaps")
                    .to_string();
                gaps.entry(inst).or_default().push(path.clone());
            }
            Input::Series { path } => {
                let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("series").to_string();
                match read_series(path) {
                    Ok(v) => jobs.push(Job { name, source: Source::Series(v) }),
                    Err(e) => errors.push(err(&name, None, "input", e)),
                }
            }
            Input::Synth { spec } => match spec.generate() {
                Ok(Generated::Series(v)) => {
                    let kind = serde_json::to_value(&spec.kind).ok();
                    let kind = kind.as_ref().and_then(|k| k["kind"].as_str()).unwrap_or("series").to_string();
                    jobs.push(Job { name: format!("synth{idx}_{kind}"), source: Source::Series(v) });
                }
                Ok(Generated::OrderFlow(stream)) => {
                    jobs.push(Job { name: stream.instrument.clone(), source: Source::OrderFlow(vec![stream]) })
                }
                Err(e) => errors.push(err(&format!("synth{idx}"), None, "synth", e)),
            },
        }
    }
    for (inst, files) in order_flow {
        let mut days = Vec::new();
        let mut failed = false;
        for f in &files {
            match read_session_file(f, cfg.tick_size) {
                Ok(s) => days.push(s),
                Err(e) => {
                    errors.push(err(&inst, None, "orderflow", format!("{}: {e}", f.display())));
                    failed = true;
                }
            }
        }
        if !failed {
            days.sort_by(|a, b| a.trading_day.cmp(&b.trading_day));
            jobs.push(Job { name: inst, source: Source::OrderFlow(days) });
        }
    }
    for (inst, files) in gaps {
        let mut series = Vec::new();
        for f in &files {
            let read = fs::File::open(f)
                .map_err(|e| e.to_string())
                .and_then(|file| GapSeries::read_csv(BufReader::new(file)));
            match read {
                Ok(s) => series.push(s),
                Err(e) => errors.push(err(&inst, None, "input", format!("{}: {e}", f.display()))),
            }
        }
        series.sort_by_key(|s| s.side.map(|s| s.as_str()));
        if !series.is_empty() {
            jobs.push(Job { name: inst, source: Source::Gaps(series) });
        }
    }
    jobs.sort_by(|a, b| a.name.cmp(&b.name));
    for w in jobs.windows(2) {
        if w[0].name == w[1].name {
            return Err(PipelineError::Config(format!("instrument {} comes from more than one input", w[0].name)));
        }
    }
    Ok(jobs)
}

/// Per-purpose seed derived from the master seed and the job's identity, so
/// an instrument's results do not depend on which other instruments run.
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x0100_0000_01b3;
    let mut h = FNV_OFFSET;
    for p in parts {
        for b in p.bytes().chain(std::iter::once(0)) {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    let mut z = master ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn analyze_values(
    cfg: &PipelineConfig,
    inst: &str,
    side: &str,
    values: &[f64],
    report: &mut SideReport,
    errors: &mut Vec<ErrorRecord>,
) {
    let a = &cfg.analyses;
    report.n_values = values.len();
    if a.powerlaw {
        match fit_power_law(values, &cfg.powerlaw) {
            Ok(mut fit) => {
                if a.bootstrap {
                    let seed = derive_seed(cfg.seed, &[inst, side, "bootstrap"]);
                    match bootstrap_p_value(values, &fit, cfg.n_bootstrap, seed, &cfg.powerlaw) {
                        Ok(b) => {
                            fit.p_value = Some(b.p_value);
                            report.bootstrap_failed_refits = Some(b.failed_refits);
                        }
                        Err(e) => errors.push(err(inst, Some(side), "powerlaw", e)),
                    }
                }
                report.powerlaw = Some(fit);
            }
            Err(e) => errors.push(err(inst, Some(side), "powerlaw", e)),
        }
    }
    if a.dfa {
        match hurst_dfa(values, &cfg.scaling) {
            Ok((curve, estimate)) => report.dfa = Some(ScalingResult { curve, estimate }),
            Err(e) => errors.push(err(inst, Some(side), "scaling", e)),
        }
    }
    if a.dma {
        match hurst_dma(values, &cfg.scaling) {
            Ok((curve, estimate)) => report.dma = Some(ScalingResult { curve, estimate }),
            Err(e) => errors.push(err(inst, Some(side), "scaling", e)),
        }
    }
    if a.mfdfa {
        match mfdfa(values, &cfg.scaling, &cfg.q_grid) {
            Ok((curves, spectrum)) => report.mfdfa = Some(MfdfaResult { curves, spectrum }),
            Err(e) => errors.push(err(inst, Some(side), "multifractal", e)),
        }
    }
    if a.surrogates {
        let stats = [(a.dfa, Statistic::HDfa), (a.dma, Statistic::HDma), (a.mfdfa, Statistic::DeltaAlpha)];
        for (enabled, stat) in stats {
            if !enabled {
                continue;
            }
            let seed = derive_seed(cfg.seed, &[inst, side, "shuffle", stat.name()]);
            match surrogate_test(values, stat, cfg.n_shuffles, seed, &cfg.scaling, &cfg.q_grid) {
                Ok(r) => report.surrogates.push(r),
                Err(e) => errors.push(err(inst, Some(side), "surrogates", e)),
            }
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::Config(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

fn write_gaps(path: &Path, series: &GapSeries) -> Result<(), PipelineError> {
    let file = fs::File::create(path).map_err(|e| PipelineError::io(path, e))?;
    series.write_csv(BufWriter::new(file)).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
}

struct JobOutput {
    report: InstrumentReport,
    errors: Vec<ErrorRecord>,
    /// Defined gaps per side, for the ensemble fit.
    pooled: Option<[Vec<f64>; 2]>,
}

fn run_job(cfg: &PipelineConfig, job: Job, out: &Path) -> Result<JobOutput, PipelineError> {
    let dir = out.join(&job.name);
    fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
    let mut errors = Vec::new();
    let mut sides = BTreeMap::new();
    let mut replay_info = None;
    let mut pooled = None;
    let source = match job.source {
        Source::OrderFlow(days) => {
            let replay: Replay = match extract_gap_series_days(&days) {
                Ok(r) => r,
                Err(e) => {
                    errors.push(err(&job.name, None, "lob_engine", e));
                    return Ok(JobOutput {
                        report: InstrumentReport {
                            instrument: job.name,
                            source: "order_flow".into(),
                            config: cfg.embedded(),
                            replay: None,
                            sides,
                        },
                        errors,
                        pooled: None,
                    });
                }
            };
            replay_info = Some(ReplayInfo {
                days: days.iter().map(|d| d.trading_day.clone()).collect(),
                events: days.iter().map(|d| d.events.len() as u64).sum(),
                fills: replay.fill_count,
                unknown_cancels: replay.warnings.len(),
            });
            let mut pool: [Vec<f64>; 2] = Default::default();
            for (i, side) in [Side::Buy, Side::Sell].into_iter().enumerate() {
                let series = replay.side(side);
                write_gaps(&dir.join(gap_file(side)), series)?;
                let mut rep = SideReport { n_observations: series.observations.len(), ..Default::default() };
                match summarize_gaps(series, series.observed_minutes) {
                    Ok(s) => rep.summary = Some(s),
                    Err(e) => errors.push(err(&job.name, Some(side.as_str()), "lob_engine", e)),
                }
                let values = series.defined_gaps();
                analyze_values(cfg, &job.name, side.as_str(), &values, &mut rep, &mut errors);
                pool[i] = values;
                sides.insert(side.as_str().to_string(), rep);
            }
            pooled = Some(pool);
            "order_flow"
        }
        Source::Gaps(list) => {
            let mut pool: [Vec<f64>; 2] = Default::default();
            for series in &list {
                let side = series.side.unwrap_or(Side::Buy);
                let mut rep = SideReport { n_observations: series.observations.len(), ..Default::default() };
                let values = series.defined_gaps();
                analyze_values(cfg, &job.name, side.as_str(), &values, &mut rep, &mut errors);
                pool[if side == Side::Buy { 0 } else { 1 }] = values;
                sides.insert(side.as_str().to_string(), rep);
            }
            pooled = Some(pool);
            "gaps"
        }
        Source::Series(values) => {
            write_series(&dir.join(SERIES_FILE), &values)?;
            let mut rep = SideReport { n_observations: values.len(), ..Default::default() };
            analyze_values(cfg, &job.name, "series", &values, &mut rep, &mut errors);
            sides.insert("series".to_string(), rep);
            "series"
        }
    };
    let report = InstrumentReport {
        instrument: job.name,
        source: source.into(),
        config: cfg.embedded(),
        replay: replay_info,
        sides,
    };
    write_json(&dir.join(REPORT_FILE), &report)?;
    Ok(JobOutput { report, errors, pooled })
}

/// Cross-section over every instrument with both sides, or `None` with fewer than two.
pub fn build_cross_section(reports: &[InstrumentReport]) -> Option<CrossSection> {
    let stocks: Vec<StockStats> = reports.iter().filter_map(|r| r.stock_stats()).collect();
    if stocks.len() < 2 {
        return None;
    }
    cross_section_report(&stocks).ok()
}

pub fn write_cross_section(out: &Path, cs: &CrossSection) -> Result<(), PipelineError> {
    write_json(&out.join(CROSS_SECTION_JSON), cs)?;
    let txt = out.join(CROSS_SECTION_TXT);
    fs::write(&txt, cs.to_text()).map_err(|e| PipelineError::io(&txt, e))
}

/// Runs every enabled analysis on every instrument and writes the reports.
///
/// Each instrument gets `<out>/<instrument>/report.json` plus its gap files
/// or series. Failures inside one instrument are collected in
/// `<out>/errors.json` and do not stop the others.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    cfg.validate()?;
    let out = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("lobgap-out"));
    let mut errors = Vec::new();
    let jobs = collect_jobs(cfg, &mut errors)?;
    if jobs.is_empty() {
        return Err(PipelineError::InsufficientData(if errors.is_empty() {
            "no instruments found in the inputs".into()
        } else {
            format!("no readable instruments; first error: {}", errors[0].message)
        }));
    }
    fs::create_dir_all(&out).map_err(|e| PipelineError::io(&out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let results: Vec<Result<JobOutput, PipelineError>> =
        pool.install(|| jobs.into_par_iter().map(|job| run_job(cfg, job, &out)).collect());

    let mut reports = Vec::new();
    let mut pooled: Vec<(String, [Vec<f64>; 2])> = Vec::new();
    for r in results {
        let r = r?;
        errors.extend(r.errors);
        if let Some(p) = r.pooled {
            pooled.push((r.report.instrument.clone(), p));
        }
        reports.push(r.report);
    }

    if cfg.analyses.ensemble && cfg.analyses.powerlaw && !pooled.is_empty() {
        let mut fits = BTreeMap::new();
        for (i, side) in [Side::Buy, Side::Sell].into_iter().enumerate() {
            let all: Vec<f64> = pooled.iter().flat_map(|(_, p)| p[i].iter().copied()).collect();
            if all.is_empty() {
                continue;
            }
            match fit_power_law(&all, &cfg.powerlaw) {
                Ok(f) => {
                    fits.insert(side.as_str().to_string(), f);
                }
                Err(e) => errors.push(err("ensemble", Some(side.as_str()), "powerlaw", e)),
            }
        }
        let ens = EnsembleReport { config: cfg.embedded(), instruments: pooled.iter().map(|p| p.0.clone()).collect(), fits };
        write_json(&out.join(ENSEMBLE_FILE), &ens)?;
    }

    let mut cross_section = false;
    if cfg.analyses.regressions {
        if let Some(cs) = build_cross_section(&reports) {
            write_cross_section(&out, &cs)?;
            cross_section = true;
        }
    }
    write_json(&out.join(ERRORS_FILE), &errors)?;
    for e in &errors {
        log::error!("{} {} [{}]: {}", e.instrument, e.side.as_deref().unwrap_or("-"), e.module, e.message);
    }
    Ok(RunSummary { output_dir: out, instruments: reports.into_iter().map(|r| r.instrument).collect(), errors, cross_section })
}

/// Loads every `<out>/<instrument>/report.json`, sorted by instrument.
pub fn load_reports(out: &Path) -> Result<Vec<InstrumentReport>, PipelineError> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(out)
        .map_err(|e| PipelineError::io(out, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(REPORT_FILE).is_file())
        .collect();
    dirs.sort();
    dirs.iter().map(|d| InstrumentReport::load(&d.join(REPORT_FILE))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_depend_on_every_part() {
        let a = derive_seed(1, &["X", "buy", "bootstrap"]);
        assert_eq!(a, derive_seed(1, &["X", "buy", "bootstrap"]));
        assert_ne!(a, derive_seed(2, &["X", "buy", "bootstrap"]));
        assert_ne!(a, derive_seed(1, &["X", "sell", "bootstrap"]));
        assert_ne!(derive_seed(1, &["ab", "c"]), derive_seed(1, &["a", "bc"]));
    }

    #[test]
    fn series_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.txt");
        let xs = vec![0.1, -2.5e-17, 3.0, f64::MAX];
        write_series(&p, &xs).unwrap();
        assert_eq!(read_series(&p).unwrap(), xs);
    }
}
