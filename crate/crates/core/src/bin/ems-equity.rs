use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ems_equity::config::{reference_text, synth_config, KeyValues, RunConfig};
use ems_equity::metrics::Metric;
use ems_equity::pipeline::{analyze, synth_outputs, validate};
use ems_equity::report::ExportFormat;
use ems_equity::{Error, Result};

const EXIT_FATAL: u8 = 1;
const EXIT_PROBLEMS: u8 = 2;

#[derive(Parser)]
#[command(name = "ems-equity", version, about = "Emergency response access by ZIP income bracket")]
#[command(after_long_help = keys_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn keys_help() -> String {
    format!("Exit status: 0 success, 1 fatal error, 2 validation problems.\n\n{}", reference_text())
}

#[derive(Subcommand)]
enum Command {
    /// Run ingest, metrics, regressions and reports.
    Analyze(AnalyzeArgs),
    /// Write a deterministic synthetic dataset.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check configuration and input files without analysing.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep only calls from this year.
    #[arg(long)]
    year: Option<i32>,
    /// Model only this metric; repeatable.
    #[arg(long = "metric", value_parser = parse_metric)]
    metrics: Vec<Metric>,
    /// Response-time threshold in seconds.
    #[arg(long = "threshold.response_time")]
    response_time: Option<f64>,
    /// Station-distance threshold in miles.
    #[arg(long = "threshold.station_distance")]
    station_distance: Option<f64>,
    /// ER-distance threshold in miles.
    #[arg(long = "threshold.er_distance")]
    er_distance: Option<f64>,
    /// Thresholds 300 s / 0.4 mi / 1.0 mi and the published reference brackets.
    #[arg(long)]
    reproduce_paper: bool,
    /// Table format; repeatable. Overrides `report.format`.
    #[arg(long = "format", value_parser = parse_format)]
    formats: Vec<ExportFormat>,
}

fn parse_metric(s: &str) -> std::result::Result<Metric, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_format(s: &str) -> std::result::Result<ExportFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn run_analyze(args: &AnalyzeArgs) -> Result<PathBuf> {
    let mut cfg = RunConfig::load(&args.config)?;
    if args.reproduce_paper {
        cfg.apply_reproduction_preset();
    }
    if let Some(y) = args.year {
        cfg.filter.year = Some(y);
    }
    if !args.metrics.is_empty() {
        cfg.metrics = args.metrics.clone();
        cfg.metrics.sort();
        cfg.metrics.dedup();
    }
    if !args.formats.is_empty() {
        cfg.formats = args.formats.clone();
    }
    for (m, v) in [
        (Metric::ResponseTime, args.response_time),
        (Metric::StationDistance, args.station_distance),
        (Metric::ErDistance, args.er_distance),
    ] {
        if let Some(v) = v {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("--threshold.{} {v} must be strictly positive", m.name())));
            }
            cfg.threshold_overrides.set(m, v);
        }
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| Error::Config("no output directory: pass --out or set output.dir".into()))?;
    let analysis = analyze(&cfg)?;
    analysis.outputs.write_to(&out)?;
    for f in analysis.fits.values() {
        eprintln!(
            "{}: n = {}, threshold = {}, HL chi2 = {:.3e}, p = {:.4}",
            f.metric, f.observations, f.threshold, f.hosmer_lemeshow.chi2, f.hosmer_lemeshow.p_value
        );
    }
    Ok(out)
}

fn run_synth(config: &Path, out: &Path) -> Result<()> {
    let kv = KeyValues::load(config)?;
    if kv.is_empty() {
        return Err(Error::Config(format!("{} has no settings", config.display())));
    }
    synth_outputs(&synth_config(&kv)?)?.write_to(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Analyze(args) => match run_analyze(&args) {
            Ok(out) => {
                eprintln!("wrote {}", out.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_FATAL)
            }
        },
        Command::Synth { config, out } => match run_synth(&config, &out) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_FATAL)
            }
        },
        Command::Validate { config } => {
            let report = match RunConfig::load(&config) {
                Ok(cfg) => validate(&cfg),
                Err(e) => ems_equity::pipeline::ValidationReport {
                    problems: vec![format!("{}: {e}", config.display())],
                    warnings: vec![],
                },
            };
            for w in &report.warnings {
                println!("warning: {w}");
            }
            for p in &report.problems {
                println!("problem: {p}");
            }
            if report.is_clean() {
                println!("ok: no problems found");
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_PROBLEMS)
            }
        }
    }
}
