//! `oxymap`: the tissue-oxygenation mapping pipeline as subcommands.
//!
//! Every subcommand is a thin composition of library operations and
//! prints a machine-readable JSON summary on success; failures exit
//! nonzero with the failing stage named on stderr.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "oxymap",
    about = "Tissue oxygenation mapping from structured illumination",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and persist a reflectance lookup table.
    Lut {
        #[command(subcommand)]
        action: LutAction,
    },
    /// Generate synthetic phantom data.
    Phantom {
        #[command(subcommand)]
        action: PhantomAction,
    },
    /// Conventional three-phase pipeline: triplets to an optical-property map.
    Sfdi(commands::sfdi::SfdiArgs),
    /// Single-snapshot pipeline: two structured frames to a saturation map.
    Ssop(commands::ssop::SsopArgs),
    /// Fit hemoglobin and compute saturation from absorption maps.
    Sto2(commands::sto2::Sto2Args),
    /// Run the neural generator on an encoded input tensor.
    Infer(commands::infer::InferArgs),
    /// Benchmark neural inference across thread counts.
    Bench(commands::bench::BenchArgs),
    /// Normalized mean absolute error between two saturation maps.
    Eval(commands::eval::EvalArgs),
    /// Region-of-interest saturation trend over a frame sequence.
    Timeseries(commands::timeseries::TimeseriesArgs),
}

#[derive(Subcommand)]
enum LutAction {
    /// Evaluate the forward model over a grid and write the table.
    Build(commands::lut::LutBuildArgs),
}

#[derive(Subcommand)]
enum PhantomAction {
    /// Render scenes, reference bundles, and optional datasets/frames.
    Gen(commands::phantom::PhantomGenArgs),
}

/// Existing-file check with the stage name attached to the error.
fn check_inputs(stage: &str, paths: &[&PathBuf]) -> anyhow::Result<()> {
    for p in paths {
        if !p.exists() {
            anyhow::bail!("{stage}: input file {} does not exist", p.display());
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Lut {
            action: LutAction::Build(args),
        } => commands::lut::run(args),
        Command::Phantom {
            action: PhantomAction::Gen(args),
        } => commands::phantom::run(args),
        Command::Sfdi(args) => commands::sfdi::run(args),
        Command::Ssop(args) => commands::ssop::run(args),
        Command::Sto2(args) => commands::sto2::run(args),
        Command::Infer(args) => commands::infer::run(args),
        Command::Bench(args) => commands::bench::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Timeseries(args) => commands::timeseries::run(args),
    };
    if let Err(e) = result {
        eprintln!("oxymap: {e:#}");
        std::process::exit(1);
    }
}
