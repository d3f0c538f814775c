use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rsma_bench::experiment::{self, emit, preset, run_experiment, ExperimentResult, ExperimentSpec, OutputFormat};
use rsma_bench::io::{
    load_config, load_ensemble, read_json, save_ensemble, write_json, ChannelEnsemble, ChannelFormat, DumpingSolver,
};
use rsma_bench::ClarabelSolver;
use rsma_core::channel::sample_channels_with;
use rsma_core::strategy::solve;
use rsma_core::{ConicSolver, RunMode, Strategy, SystemConfig};

const EXIT_INVALID: u8 = 1;
const EXIT_PARTIAL: u8 = 2;

#[derive(Parser)]
#[command(name = "rsma", version, about = "Max-min fair RSMA precoding under finite blocklength")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a system configuration or experiment spec and list every violation.
    Validate {
        path: PathBuf,
        /// Parse the file as an experiment spec.
        #[arg(long)]
        spec: bool,
    },
    /// Draw channel realizations for a configuration.
    SampleChannels {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Also draw the relay-to-receiver table.
        #[arg(long)]
        relay: bool,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to json for `.json` paths and bin otherwise.
        #[arg(long, value_enum)]
        format: Option<EnsembleFormat>,
    },
    /// Solve one channel realization.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Channel ensemble file; otherwise channels are drawn from `--seed`.
        #[arg(long, conflicts_with = "seed")]
        channels: Option<PathBuf>,
        #[arg(long, default_value_t = 0, requires = "channels")]
        index: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the strategy run as JSON; printed to stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write every conic subproblem to this directory.
        #[arg(long)]
        dump_programs: Option<PathBuf>,
    },
    /// Run a Monte-Carlo sweep and write CSV/JSON outputs plus a manifest.
    Sweep {
        #[arg(long, conflicts_with = "spec", value_parser = clap::builder::PossibleValuesParser::new(experiment::PRESETS))]
        preset: Option<String>,
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Use the full-scale preset (100 seeds, dense sweep).
        #[arg(long, requires = "preset")]
        full: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seeds: Option<u32>,
        #[arg(long)]
        base_seed: Option<u64>,
        #[arg(long, allow_hyphen_values = true)]
        snr_db: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        blocklengths: Option<Vec<u32>>,
        #[arg(long, value_delimiter = ',', value_parser = parse_strategy)]
        strategies: Option<Vec<Strategy>>,
        #[arg(long, value_delimiter = ',', value_parser = parse_mode)]
        modes: Option<Vec<RunMode>>,
        /// Record wall-clock times (outputs are then no longer reproducible).
        #[arg(long)]
        timing: bool,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, value_enum, default_value_t = Format::Both)]
        format: Format,
    },
    /// Relative MMF gain `(A − B)/B` from a sweep result.
    Gains {
        result: PathBuf,
        #[arg(long, value_parser = parse_strategy)]
        a: Strategy,
        #[arg(long, value_parser = parse_strategy)]
        b: Strategy,
        #[arg(long)]
        l: u32,
        #[arg(long, value_parser = parse_mode, default_value = "fin")]
        mode: RunMode,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EnsembleFormat {
    Bin,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Both,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    Strategy::from_tag(s).ok_or_else(|| format!("unknown strategy {s:?}; expected RSMA, C-RSMA, SDMA or NOMA"))
}

fn parse_mode(s: &str) -> Result<RunMode, String> {
    RunMode::from_tag(s).ok_or_else(|| format!("unknown mode {s:?}; expected fin, inf or inf-fin"))
}

/// Error carrying a specific exit code.
#[derive(Debug)]
struct Exit(u8, String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.downcast_ref::<Exit>().map_or(EXIT_INVALID, |x| x.0))
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Validate { path, spec } => validate(&path, spec),
        Command::SampleChannels { config, seed, count, relay, out, format } => {
            let config = checked_config(&config)?;
            let ensemble = ChannelEnsemble::sample(&config, seed, count, relay);
            let format = match format {
                Some(EnsembleFormat::Bin) => ChannelFormat::Binary,
                Some(EnsembleFormat::Json) => ChannelFormat::Json,
                None => ChannelFormat::from_path(&out),
            };
            save_ensemble(&out, &ensemble, format)?;
            eprintln!("wrote {count} realization(s) to {}", out.display());
            Ok(0)
        }
        Command::Solve { config, channels, index, seed, out, dump_programs } => {
            let config = checked_config(&config)?;
            let set = match channels {
                Some(path) => {
                    let ensemble = load_ensemble(&path)?;
                    ensemble.check_against(&config)?;
                    ensemble
                        .realizations
                        .get(index)
                        .cloned()
                        .with_context(|| format!("index {index} out of range ({} realizations)", ensemble.realizations.len()))?
                }
                None => sample_channels_with(&config, seed.unwrap_or(0), config.strategy.is_cooperative()),
            };
            let base = ClarabelSolver::default();
            let dumper = dump_programs.as_deref().map(|d| DumpingSolver::new(&base, d)).transpose()?;
            let solver: &dyn ConicSolver = match &dumper {
                Some(d) => d,
                None => &base,
            };
            let run = solve(&set, &config, solver).map_err(|e| Exit(EXIT_PARTIAL, e.to_string()))?;
            if let Some(d) = &dumper {
                eprintln!("dumped {} program(s)", d.dumped());
            }
            match out {
                Some(path) => write_json(&path, &run)?,
                None => println!("{}", serde_json::to_string_pretty(&run)?),
            }
            eprintln!("{} {}: mmf = {:.6} bits/channel use", run.strategy, run.mode, run.solution.mmf);
            Ok(0)
        }
        Command::Sweep {
            preset: name,
            spec,
            full,
            out,
            seeds,
            base_seed,
            snr_db,
            blocklengths,
            strategies,
            modes,
            timing,
            jobs,
            format,
        } => {
            let mut spec = match (name, spec) {
                (Some(name), None) => preset(&name, full)?,
                (None, Some(path)) => read_json::<ExperimentSpec>(&path)?,
                _ => bail!("exactly one of --preset or --spec is required"),
            };
            if let Some(v) = seeds {
                spec.seeds = v;
            }
            if let Some(v) = base_seed {
                spec.base_seed = v;
            }
            if let Some(v) = snr_db {
                spec.snr_db = v;
                if spec.relay_snr_db.is_some() {
                    spec.relay_snr_db = Some(v);
                }
            }
            if let Some(v) = blocklengths {
                spec.blocklengths = v;
            }
            if let Some(v) = strategies {
                spec.strategies = v;
            }
            if let Some(v) = modes {
                spec.modes = v;
            }
            spec.record_timing |= timing;
            let result = run_experiment(&spec, &ClarabelSolver::default(), jobs)?;
            let format = match format {
                Format::Csv => OutputFormat::Csv,
                Format::Json => OutputFormat::Json,
                Format::Both => OutputFormat::Both,
            };
            let manifest = emit(&result, &out, format)?;
            print_summary(&result);
            eprintln!("wrote {} record(s) to {}", manifest.records, out.display());
            if manifest.failures > 0 {
                eprintln!("{} cell(s) failed", manifest.failures);
                return Ok(EXIT_PARTIAL);
            }
            Ok(0)
        }
        Command::Gains { result, a, b, l, mode } => {
            let result: ExperimentResult = read_json(&result)?;
            let g = result.relative_gain(a, b, mode, l)?;
            println!("{g:?}");
            Ok(0)
        }
    }
}

fn checked_config(path: &Path) -> Result<SystemConfig> {
    let config = load_config(path)?;
    config.validate().map_err(|e| Exit(EXIT_INVALID, format!("{}: {e}", path.display())))?;
    Ok(config)
}

fn validate(path: &Path, as_spec: bool) -> Result<u8> {
    let outcome = if as_spec {
        read_json::<ExperimentSpec>(path)?.validate().map_err(|e| e.to_string())
    } else {
        load_config(path)?.validate().map_err(|e| e.to_string())
    };
    match outcome {
        Ok(()) => {
            println!("{}: ok", path.display());
            Ok(0)
        }
        Err(e) => {
            println!("{}: {e}", path.display());
            Ok(EXIT_INVALID)
        }
    }
}

fn print_summary(result: &ExperimentResult) {
    println!("{:<8} {:<8} {:>6} {:>12} {:>10} {:>8}", "strategy", "mode", "l_n", "mean_mmf", "se", "failed");
    for a in &result.aggregates {
        println!(
            "{:<8} {:<8} {:>6} {:>12.6} {:>10.6} {:>8}",
            a.strategy.tag(),
            a.mode.tag(),
            a.l_n,
            a.mean_mmf,
            a.se_mmf,
            a.failed
        );
    }
}
