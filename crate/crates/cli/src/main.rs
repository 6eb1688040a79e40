//! `cefkit` command-line driver.
//!
//! Exit codes: 0 success, 1 configuration error, 2 pipeline error,
//! 3 oracle mismatch.

use std::path::PathBuf;
use std::process::ExitCode;

use cefkit::cdm::CdmKind;
use cefkit::config::{ConfigError, ExperimentConfig};
use cefkit::fi::FiMode;
use cefkit::pipeline::{Pipeline, PipelineError, Stage, MANIFEST_FILE};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cefkit", version, about = "Collision-exposure analysis, fault injection and protection planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Args)]
struct Opts {
    /// Experiment configuration (TOML). Without it the desk-scale defaults apply.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory; overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// FI mode: exhaustive, uniform_statistical or cef_aware.
    #[arg(long, global = true)]
    mode: Option<FiMode>,
    /// Restrict to these layouts (repeatable): A1, A2, A3, A4.
    #[arg(long, global = true)]
    kind: Vec<CdmKind>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate the motion set.
    Motionset,
    /// Phase 1: per-bit CEF reports.
    Cef,
    /// Fault injection over the scenario batches.
    Fi,
    /// Rank structures and emit FIT reduction and overhead curves.
    Plan,
    /// Cross-layout CEF distributions and FIT table.
    Compare,
    /// Brute-force cross-checks on a tiny instance.
    Oracle,
    /// All pipeline stages in order.
    Run,
}

fn load_config(o: &Opts) -> Result<ExperimentConfig, ConfigError> {
    let mut c = match (&o.config, o.seed) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(seed)) => ExperimentConfig::desk_default(seed),
        (None, None) => {
            return Err(ConfigError { field: "seed".into(), reason: "pass --seed or a --config that sets it".into() })
        }
    };
    if let Some(seed) = o.seed {
        c.seed = seed;
    }
    if let Some(mode) = o.mode {
        c.fi.mode = mode;
    }
    if !o.kind.is_empty() {
        c.kinds = o.kind.clone();
    }
    if o.out.is_some() {
        c.output_dir = o.out.clone();
    }
    c.validate()?;
    Ok(c)
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let config = load_config(&cli.opts)?;
    let out = config.output_dir.clone().unwrap_or_else(|| PathBuf::from("cefkit-out"));
    let mut pipeline = Pipeline::new(config, &out)?;
    if let Some(j) = cli.opts.jobs {
        pipeline = pipeline.with_jobs(j);
    }
    let stages: Vec<Stage> = match cli.command {
        Command::Motionset => vec![Stage::Motionset],
        Command::Cef => vec![Stage::Cef],
        Command::Fi => vec![Stage::Fi],
        Command::Plan => vec![Stage::Plan],
        Command::Compare => vec![Stage::Compare],
        Command::Oracle => vec![Stage::Oracle],
        Command::Run => Stage::PIPELINE.to_vec(),
    };
    for stage in stages {
        let rec = pipeline.run_stage(stage)?;
        println!("{stage}: {} artifacts in {:.2} s", rec.artifacts.len(), rec.wall_clock_s);
        for (key, b) in &rec.fi_runs {
            println!("  {key}: {} runs ({} exhaustive), speedup {:.1}x", b.run_counter, b.exhaustive_runs(), b.speedup());
        }
    }
    println!("manifest: {}", out.join(MANIFEST_FILE).display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
