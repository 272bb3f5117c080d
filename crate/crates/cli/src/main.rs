//! `fmgrid`: batch experiments for language-model world models and agents on grid worlds.

mod backends;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use commands::{Outcome, Run};
use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "fmgrid", version, about = "Grid-world experiments with language-model world models and agents")]
struct Cli {
    /// Worker threads for parallel jobs (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Probe single-step prediction accuracy over every (cell, action).
    Fidelity(RunArgs),
    /// Audit location and binary samplers with chi-square tests.
    Distribution(RunArgs),
    /// Train scratch and/or world-model-pretrained agents across seeds.
    Train(RunArgs),
    /// Benchmark a language-model agent with each prompting strategy.
    Fa(RunArgs),
    /// Combine the runs under a directory into one set of tables and figures.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: config `out`, else runs/<name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Response cache file for deterministic queries.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Replace the config's root seed.
    #[arg(long)]
    seed_override: Option<u64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding one or more runs.
    run_dir: PathBuf,
    /// Where to write the combined report (default: <run_dir>/report).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_experiment(args: RunArgs, job: fn(&Run) -> Result<Outcome>) -> Result<Outcome> {
    let config = ExperimentConfig::load(&args.config)?;
    let run = Run::new(config, args.out, args.cache, args.seed_override)?;
    let outcome = job(&run)?;
    eprintln!(
        "{} jobs, {} failed; outputs in {}",
        outcome.jobs,
        outcome.failures.len(),
        run.out.display()
    );
    for f in &outcome.failures {
        eprintln!("  failed: {f}");
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| -> Result<bool> {
        if let Some(w) = cli.workers {
            rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build_global()
                .context("configuring worker pool")?;
        }
        let outcome = match cli.command {
            Command::Fidelity(a) => run_experiment(a, commands::fidelity)?,
            Command::Distribution(a) => run_experiment(a, commands::distribution)?,
            Command::Train(a) => run_experiment(a, commands::train)?,
            Command::Fa(a) => run_experiment(a, commands::fa)?,
            Command::Report(a) => {
                let n = commands::report(&a.run_dir, a.out)?;
                eprintln!("combined {n} runs");
                return Ok(true);
            }
        };
        Ok(outcome.failures.is_empty())
    })();
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
