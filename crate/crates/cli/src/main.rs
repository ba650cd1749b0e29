//! `ftc`: finite-time curvature fields, curves, segmentation and shape coherence.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ftc::FtcError;

#[derive(Debug, Parser)]
#[command(name = "ftc", version, about = "Finite-time curvature and shape-coherence analysis of 2D flows")]
struct Cli {
    /// Worker threads; never changes results
    #[arg(long, global = true, env = "FTC_THREADS")]
    threads: Option<usize>,
    /// TOML config; flags override its keys
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute a kernel field on a grid
    Field(commands::FieldArgs),
    /// Extract FTC troughs, FTLE ridges and zero-splitting curves
    Curves(commands::CurvesArgs),
    /// Partition a field by seeded region growing
    Segment(commands::SegmentArgs),
    /// Shape-coherence factor of a region
    Alpha(commands::AlphaArgs),
    /// Time the kernels
    Bench(commands::BenchArgs),
}

/// 2 for bad input, 3 for numerical failure.
fn exit_code(e: &FtcError) -> u8 {
    match e {
        FtcError::Config(_)
        | FtcError::Format(_)
        | FtcError::Io(_)
        | FtcError::OutOfBounds(_)
        | FtcError::SeedNotOnLevel { .. }
        | FtcError::GridTooSmall { .. }
        | FtcError::EmptyOccupancy => 2,
        _ => 3,
    }
}

fn run(cli: &Cli) -> Result<(), FtcError> {
    if cli.threads == Some(0) {
        return Err(FtcError::Config("--threads must be at least 1".into()));
    }
    let cfg = config::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Field(a) => commands::field(&cfg, a, cli.threads),
        Command::Curves(a) => commands::curves(&cfg, a, cli.threads),
        Command::Segment(a) => commands::segment(&cfg, a, cli.threads),
        Command::Alpha(a) => commands::alpha(&cfg, a, cli.threads),
        Command::Bench(a) => commands::bench(&cfg, a, cli.threads),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
