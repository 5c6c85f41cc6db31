//! Library half of the `advsmooth` binary: argument types, config schemas,
//! manifest plumbing and the five subcommand runners. The binary itself is a
//! thin parse-and-dispatch wrapper so the whole surface stays testable.
//!
//! Five subcommands, each driven entirely by a JSON config file:
//!
//! * `surface` - sample loss grids over 2-D parameter slices and export CSV/JSON.
//! * `probe` - smoothness constants, curvature, spectral norm, sharpness.
//! * `entropy` - tabulate the smoothed objective at listed parameter points.
//! * `train` - one adversarial-training run with metrics and a checkpoint.
//! * `verify-lemmas` - the seeded check battery, one pass/fail row per check.
//!
//! Flags only choose the subcommand, the config file, the output directory,
//! an optional seed override and the verbosity; every numeric parameter
//! lives in the config so a run's provenance is one file. Each run writes a
//! `manifest.json` (config echo, seeds, artifact hashes) beside its outputs.
//!
//! Exit codes: 0 on success; 2 for unusable invocations or configs (the
//! message names the offending field path); 3 for numeric failures (the
//! message names the failing computation or check).

pub mod cmd;
pub mod configs;
pub mod error;
pub mod manifest;

use clap::{ArgAction, Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "advsmooth",
    version,
    about = "Numerical laboratory for the smoothness of adversarial training objectives",
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Sample loss surfaces over a 2-D parameter grid and export them.
    Surface(RunArgs),
    /// Estimate smoothness constants, curvature and sharpness.
    Probe(RunArgs),
    /// Tabulate the smoothed objective at listed parameter points.
    Entropy(RunArgs),
    /// Run one adversarial-training experiment.
    Train(RunArgs),
    /// Run the seeded numerical check battery and report pass/fail per check.
    #[command(name = "verify-lemmas")]
    VerifyLemmas(RunArgs),
}

/// Flags shared by every subcommand.
#[derive(Args)]
pub struct RunArgs {
    /// JSON config file for this subcommand.
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,
    /// Directory for artifacts and manifest.json (created if missing).
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    /// Override the run's master seed from the config.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Print per-artifact and per-epoch detail.
    #[arg(short, long, action = ArgAction::Count)]
    pub verbose: u8,
    /// Print nothing but errors.
    #[arg(short, long, conflicts_with = "verbose")]
    pub quiet: bool,
}

impl RunArgs {
    fn reporter(&self) -> cmd::Reporter {
        cmd::Reporter::new(self.verbose, self.quiet)
    }
}

/// Run the selected subcommand; the caller maps the error to an exit code.
pub fn dispatch(cli: &Cli) -> Result<(), error::CliError> {
    match &cli.command {
        Command::Surface(args) => cmd::surface::run(args),
        Command::Probe(args) => cmd::probe::run(args),
        Command::Entropy(args) => cmd::entropy::run(args),
        Command::Train(args) => cmd::train::run(args),
        Command::VerifyLemmas(args) => cmd::verify::run(args),
    }
}
