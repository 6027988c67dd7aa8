//! Scenario runner: JSON config in, CSV/JSON/PGM artifacts out.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::ScenarioConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "crack-repair", version, about = "Simulated autonomous crack detection and adaptive filling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario JSON; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for independent experiment runs.
    #[arg(long, global = true, default_value_t = 1)]
    pub parallel: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Print calibration strips and fit the flow model.
    Calibrate,
    /// Detect, refine, fill and validate one specimen.
    Fill,
    /// Compare fixed speeds and adaptive control.
    Experiment,
    /// RGB-D versus laser-refined waypoint differences.
    Localize,
    /// Write sensor views, masks and laser profiles.
    Scan,
}

/// Loads the config, applies overrides and runs the command. Returns the
/// written files.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    let mut out = commands::Output::create(&cfg.output)?;
    match cli.command {
        Command::Calibrate => commands::cmd_calibrate(&cfg, &mut out)?,
        Command::Fill => commands::cmd_fill(&cfg, &mut out)?,
        Command::Experiment => commands::cmd_experiment(&cfg, &mut out, cli.parallel)?,
        Command::Localize => commands::cmd_localize(&cfg, &mut out, cli.parallel)?,
        Command::Scan => commands::cmd_scan(&cfg, &mut out)?,
    }
    Ok(out.written)
}
