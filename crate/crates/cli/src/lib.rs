//! Command-line pipeline over the `vcrg-core` and `vcrg-model` crates.

pub mod commands;
pub mod config;
pub mod error;
pub mod verify;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::Value;

pub use config::{ConfigSource, Paths, RunConfig};
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "vcrg", version, about = "Graph transformer node classification with virtual-connection token lists")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Override a config key, e.g. `--set tokenize.hops=2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,

    /// Global seed; falls back to the config `seed`, then `VCRG_SEED`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Directory for any path not given in the config.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    /// Worker threads for tokenization (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a stochastic block model dataset.
    Synth,
    /// Build the token store.
    Tokenize,
    /// Train on a token store, writing a checkpoint and metrics.
    Train,
    /// Accuracy of a checkpoint on every split.
    Eval,
    /// Run a numerical verification suite.
    Verify {
        #[arg(long, value_enum, default_value = "theorems")]
        suite: verify::Suite,
    },
}

pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let source = ConfigSource {
        file: cli.config.as_deref(),
        overrides: &cli.overrides,
        seed: cli.seed,
        env_seed: std::env::var(config::SEED_ENV).ok(),
    };
    let mut config = RunConfig::resolve(&source)?;
    if let Some(dir) = &cli.out_dir {
        config.paths.fill_defaults(dir);
    }
    if cli.jobs == Some(0) {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    Ok(config)
}

/// Runs one subcommand and returns its JSON summary.
pub fn run(cli: &Cli) -> Result<Value> {
    let config = resolve_config(cli)?;
    match &cli.command {
        Command::Synth => commands::synth(&config),
        Command::Tokenize => commands::tokenize(&config, cli.jobs),
        Command::Train => commands::train_command(&config),
        Command::Eval => commands::eval(&config),
        Command::Verify { suite } => commands::verify(*suite, config.seed.unwrap_or(0)),
    }
}
