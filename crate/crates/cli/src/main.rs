//! `tubeflock`: simulations, ladder studies, and bound checks driven by a TOML run file.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "tubeflock", version, about = "Cucker-Smale flocking with singular repulsion in an infinite tube")]
struct Cli {
    /// Run file (TOML), or a manifest.json from an earlier run to reproduce it.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a config entry, e.g. `--set integrator.rtol=1e-10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory; shorthand for `--set output.dir=DIR`.
    #[arg(short, long, global = true)]
    out: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one configuration and write diagnostics and snapshots.
    Simulate {
        /// Start from a saved snapshot instead of the sampler.
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
    /// Run the n-partial ladder and test the decay of level differences.
    PartialConverge,
    /// Check the growth bounds across the ladder.
    BoundsCheck,
    /// Classical free-space flocking run.
    Flock,
    /// Sample initial data and report its local functionals.
    SampleInit,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("verdict failed: {0}")]
    VerdictFailed(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("integration failure: {0}")]
    Integration(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("bound blow-up: {0}")]
    BoundBlowUp(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::VerdictFailed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Integration(_) => 3,
            CliError::Precondition(_) => 4,
            CliError::BoundBlowUp(_) => 5,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut overrides = cli.overrides;
    if let Some(dir) = cli.out {
        overrides.push(format!("output.dir={}", toml::Value::String(dir)));
    }
    let env_seed = std::env::var(config::SEED_ENV).ok();
    let result = config::resolve(cli.config.as_deref(), &overrides, env_seed).and_then(|cfg| match cli.command {
        Command::Simulate { snapshot } => commands::simulate(&cfg, snapshot.as_deref()),
        Command::PartialConverge => commands::partial_converge(&cfg),
        Command::BoundsCheck => commands::bounds_check(&cfg),
        Command::Flock => commands::flock(&cfg),
        Command::SampleInit => commands::sample_init(&cfg),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tubeflock: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
