//! Command-line runner for the parameter-limit experiments.
//!
//! Exit codes: 0 when every requested verdict passes, 1 when one fails,
//! 2 for usage or configuration errors.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use run::Workspace;

#[derive(Parser)]
#[command(name = "sdelimit", version, about = "Limit theorems for SDEs with nonregular parameter dependence")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed, overriding `sim.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Audit the configured conditions over the schedule.
    Check,
    /// Run the convergence check for one theorem (1 is the moment suite).
    Verify {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=7))]
        theorem: u32,
    },
    /// Check then verify a catalog example with its built-in constants.
    Example { name: String },
    /// Write the transform table at one parameter value.
    DumpTransform {
        #[arg(long)]
        b: f64,
    },
    /// Write simulated paths at one parameter value.
    Simulate {
        #[arg(long)]
        b: f64,
    },
}

/// Failure category for the exit code.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

fn usage(e: anyhow::Error) -> Failure {
    Failure::Usage(e)
}

/// Core errors that stem from the configuration count as usage errors.
fn classify(e: anyhow::Error) -> Failure {
    use sdelimit_core::Error as E;
    match e.downcast_ref::<E>() {
        Some(E::Config(_) | E::InvalidParameter(_) | E::StepRefused(_)) => Failure::Usage(e),
        _ => Failure::Runtime(e),
    }
}

fn load(cli: &Cli, example: Option<&str>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match (&cli.config, example) {
        (Some(path), example) => {
            let mut cfg = ExperimentConfig::load(path).map_err(usage)?;
            if let Some(name) = example {
                // Validate the name against the catalog.
                ExperimentConfig::example(name).map_err(usage)?;
                cfg.model.name = name.into();
            }
            cfg
        }
        (None, Some(name)) => ExperimentConfig::example(name).map_err(usage)?,
        (None, None) => return Err(usage(anyhow!("--config is required for this command"))),
    };
    if let Some(seed) = cli.seed {
        cfg.sim.seed = Some(seed);
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<bool, Failure> {
    let (cfg, label) = match &cli.command {
        Command::Example { name } => (load(cli, Some(name))?, format!("example {name}")),
        Command::Check => (load(cli, None)?, "check".into()),
        Command::Verify { theorem } => (load(cli, None)?, format!("verify --theorem {theorem}")),
        Command::DumpTransform { b } => (load(cli, None)?, format!("dump-transform --b {b}")),
        Command::Simulate { b } => (load(cli, None)?, format!("simulate --b {b}")),
    };
    let ws = Workspace::new(cfg, cli.out.clone()).map_err(usage)?;
    let pass = match &cli.command {
        Command::Check => run::check(&ws),
        Command::Verify { theorem } => run::verify(&ws, *theorem),
        Command::Example { .. } => run::check(&ws).and_then(|checked| {
            let verified = run::verify(&ws, ws.cfg.example_theorem())?;
            Ok(checked && verified)
        }),
        Command::DumpTransform { b } => run::dump_transform(&ws, *b).map(|_| true),
        Command::Simulate { b } => run::simulate(&ws, *b).map(|_| true),
    }
    .map_err(classify)?;
    ws.write_metadata(&label, cli.workers, pass).map_err(Failure::Runtime)?;
    Ok(pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.workers {
        Some(0) => Err(usage(anyhow!("--workers must be at least 1"))),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => Err(Failure::Runtime(e.into())),
        },
        None => execute(&cli),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
