use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lobgap_cli::config::{Analyses, Input, PipelineConfig};
use lobgap_cli::pipeline::{build_cross_section, load_reports, run_pipeline, write_cross_section, write_series, RunSummary};
use lobgap_cli::plot::{emit_plot_data, PlotKind};
use lobgap_core::orderflow::write_order_flow;
use lobgap_core::synth::{Generated, GeneratorKind, GeneratorSpec, OrderFlowParams};
use lobgap_core::TickSize;

#[derive(Parser)]
#[command(name = "lobgap", version, about = "Order book gap statistics: replay, power-law tails, DFA/DMA and MF-DFA")]
struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true, env = "LOBGAP_WORKERS")]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "LOBGAP_OUT")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline described by a TOML or JSON config file.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Replay order-flow files and write the gap series only.
    Replay {
        /// Order-flow CSV files or directories of `<instrument>_<day>.csv`.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "0.01")]
        tick_size: TickSize,
    },
    /// Analyse order flow, gap files or plain series.
    Analyze(AnalyzeArgs),
    /// Write a synthetic series or order-flow file.
    Synth(SynthArgs),
    /// Rebuild the cross-section tables from finished reports and print them.
    Report,
    /// Write plot-ready CSV tables from finished reports.
    Plotdata {
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = PlotKind::ALL)]
        kinds: Vec<PlotKind>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InputKind {
    /// Order-flow CSV (file or directory).
    OrderFlow,
    /// Gap file written by `replay`.
    Gaps,
    /// One value per line.
    Series,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Analysis {
    Powerlaw,
    Bootstrap,
    Dfa,
    Dma,
    Mfdfa,
    Surrogates,
    Regressions,
    Ensemble,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "order-flow")]
    input_kind: InputKind,
    /// Analyses to leave out.
    #[arg(long, value_enum, value_delimiter = ',')]
    skip: Vec<Analysis>,
    #[arg(long, default_value = "0.01")]
    tick_size: TickSize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    n_shuffles: usize,
    #[arg(long, default_value_t = 100)]
    n_bootstrap: usize,
    #[arg(long, default_value_t = 1)]
    dfa_order: usize,
    #[arg(long)]
    min_scale: Option<usize>,
    #[arg(long)]
    max_scale_fraction: Option<f64>,
    #[arg(long)]
    n_scales: Option<usize>,
    #[arg(long)]
    min_tail: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SynthKind {
    Pareto,
    Fgn,
    Cascade,
    Gaussian,
    OrderFlow,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(value_enum)]
    kind: SynthKind,
    /// Series length or number of events.
    #[arg(long, default_value_t = 65_536)]
    length: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, visible_alias = "H", default_value_t = 0.75)]
    hurst: f64,
    #[arg(long, default_value_t = 2.5)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    g_min: f64,
    #[arg(long, default_value_t = 0.0)]
    body_fraction: f64,
    #[arg(long, default_value_t = 0.3)]
    p: f64,
    #[arg(long, default_value_t = 16)]
    levels: u32,
    #[arg(long, default_value = "SYN001")]
    instrument: String,
    #[arg(long, default_value = "0.01")]
    tick_size: TickSize,
    /// File to write; order flow defaults to `<out>/<instrument>_<day>.csv`.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn finish(summary: &RunSummary) -> ExitCode {
    println!("{} instruments written to {}", summary.instruments.len(), summary.output_dir.display());
    if summary.cross_section {
        println!("cross-section: {}", summary.output_dir.join("cross_section.txt").display());
    }
    if summary.errors.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("{} errors, see {}", summary.errors.len(), summary.output_dir.join("errors.json").display());
        ExitCode::from(2)
    }
}

fn analyze_config(a: AnalyzeArgs) -> PipelineConfig {
    let mut cfg = PipelineConfig { tick_size: a.tick_size, seed: a.seed, n_shuffles: a.n_shuffles, n_bootstrap: a.n_bootstrap, ..Default::default() };
    cfg.inputs = a
        .inputs
        .into_iter()
        .map(|path| match a.input_kind {
            InputKind::OrderFlow => Input::OrderFlow { path },
            InputKind::Gaps => Input::Gaps { path },
            InputKind::Series => Input::Series { path },
        })
        .collect();
    let an = &mut cfg.analyses;
    for s in a.skip {
        *match s {
            Analysis::Powerlaw => &mut an.powerlaw,
            Analysis::Bootstrap => &mut an.bootstrap,
            Analysis::Dfa => &mut an.dfa,
            Analysis::Dma => &mut an.dma,
            Analysis::Mfdfa => &mut an.mfdfa,
            Analysis::Surrogates => &mut an.surrogates,
            Analysis::Regressions => &mut an.regressions,
            Analysis::Ensemble => &mut an.ensemble,
        } = false;
    }
    cfg.scaling.dfa_order = a.dfa_order;
    if let Some(v) = a.min_scale {
        cfg.scaling.min_scale = v;
    }
    if let Some(v) = a.max_scale_fraction {
        cfg.scaling.max_scale_fraction = v;
    }
    if let Some(v) = a.n_scales {
        cfg.scaling.n_scales = v;
    }
    if let Some(v) = a.min_tail {
        cfg.powerlaw.min_tail = v;
    }
    cfg
}

fn synth(a: SynthArgs, out: Option<&Path>) -> Result<()> {
    let kind = match a.kind {
        SynthKind::Pareto => GeneratorKind::ParetoTail { beta: a.beta, g_min: a.g_min, body_fraction: a.body_fraction },
        SynthKind::Fgn => GeneratorKind::Fgn { hurst: a.hurst },
        SynthKind::Cascade => GeneratorKind::BinomialCascade { p: a.p, levels: a.levels },
        SynthKind::Gaussian => GeneratorKind::IidGaussian,
        SynthKind::OrderFlow => GeneratorKind::OrderFlow(OrderFlowParams { instrument: a.instrument.clone(), ..Default::default() }),
    };
    let spec = GeneratorSpec { kind, length: a.length, seed: a.seed };
    let dir = out.unwrap_or(Path::new("."));
    match spec.generate()? {
        Generated::Series(values) => {
            let path = a.output.unwrap_or_else(|| dir.join("series.txt"));
            write_series(&path, &values)?;
            println!("{} values written to {}", values.len(), path.display());
        }
        Generated::OrderFlow(stream) => {
            let path =
                a.output.unwrap_or_else(|| dir.join(format!("{}_{}.csv", stream.instrument, stream.trading_day)));
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).with_context(|| parent.display().to_string())?;
            }
            let file = fs::File::create(&path).with_context(|| path.display().to_string())?;
            write_order_flow(&stream, a.tick_size, BufWriter::new(file))?;
            println!("{} events written to {}", stream.events.len(), path.display());
        }
    }
    Ok(())
}

fn real_main() -> Result<ExitCode> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let out = cli.out.clone();
    let pipeline = |mut cfg: PipelineConfig| -> Result<ExitCode> {
        if out.is_some() {
            cfg.output_dir = out.clone();
        }
        if cli.workers.is_some() {
            cfg.workers = cli.workers;
        }
        Ok(finish(&run_pipeline(&cfg)?))
    };
    match cli.command {
        Command::Run { ref config, seed } => {
            let mut cfg = PipelineConfig::load(config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            pipeline(cfg)
        }
        Command::Replay { ref inputs, tick_size } => pipeline(PipelineConfig {
            inputs: inputs.iter().map(|p| Input::OrderFlow { path: p.clone() }).collect(),
            tick_size,
            analyses: Analyses::none(),
            ..Default::default()
        }),
        Command::Analyze(a) => pipeline(analyze_config(a)),
        Command::Synth(a) => {
            synth(a, out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Report => {
            let dir = out.unwrap_or_else(|| PathBuf::from("lobgap-out"));
            let reports = load_reports(&dir)?;
            let Some(cs) = build_cross_section(&reports) else {
                bail!("need at least two instruments with both sides under {}", dir.display());
            };
            write_cross_section(&dir, &cs)?;
            print!("{}", cs.to_text());
            Ok(ExitCode::SUCCESS)
        }
        Command::Plotdata { ref kinds } => {
            let dir = out.unwrap_or_else(|| PathBuf::from("lobgap-out"));
            for p in emit_plot_data(&dir, kinds)? {
                println!("{}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
