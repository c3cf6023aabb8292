//! `tessera`: batch evaluation, dataset preparation and synthetic data for
//! tile segmentation.
//!
//! Exit status is 0 on success, 2 when an input file is missing or
//! unreadable, 3 when a prediction and its ground truth differ in size, and 1
//! for any other failure.

mod config;
mod eval;
mod prepare;
mod tools;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use tessera::Connectivity;

use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "tessera", version, about = "Tile segmentation evaluation and dataset toolkit")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. Values given here override the config file.
#[derive(Args, Debug, Default)]
pub struct GlobalArgs {
    /// JSON file with any of: manifest_path, connectivity, min_region_px,
    /// output_dir, threads, seed.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// JSON-lines manifest of samples.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    /// Output directory (default: out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Pixel adjacency for connected regions: 4 or 8 (default: 8).
    #[arg(long, global = true, value_parser = parse_connectivity)]
    pub connectivity: Option<Connectivity>,

    /// Drop predicted regions smaller than this many pixels before matching (default: 1, keep all).
    #[arg(long, global = true)]
    pub min_region_px: Option<usize>,

    /// Worker threads; 0 picks one per core (default: 0).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Seed for every random choice (default: 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

fn parse_connectivity(s: &str) -> Result<Connectivity, String> {
    s.parse().map_err(|e: tessera::Error| e.to_string())
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score predictions listed in a manifest against their ground truth.
    Eval(eval::EvalArgs),
    /// Crop, augment, split and prompt source images into manifests.
    Prepare(prepare::PrepareArgs),
    /// Generate a synthetic mosaic with exact ground truth.
    Synth(tools::SynthArgs),
    /// Render four-color comparison overlays of two predictions.
    Overlay(tools::OverlayArgs),
    /// Write the cosine learning-rate schedule as CSV.
    Schedule(tools::ScheduleArgs),
    /// Enumerate the hyperparameter grid as JSON lines.
    Grid(tools::GridArgs),
    /// Evaluate the training loss for a soft mask and confidence.
    Loss(tools::LossArgs),
}

/// Failures that map to a dedicated exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// An input file is missing or cannot be decoded.
    #[error("cannot read {}: {reason}", path.display())]
    Input { path: PathBuf, reason: String },
    /// Prediction and ground truth dimensions differ.
    #[error("dimension mismatch for image {image_id}: {detail}")]
    Dimensions { image_id: String, detail: String },
}

impl CliError {
    /// Wraps a read failure so it reports exit status 2.
    pub fn input(path: impl Into<PathBuf>, err: tessera::Error) -> anyhow::Error {
        let path = err.path().map(PathBuf::from).unwrap_or_else(|| path.into());
        let reason = match &err {
            tessera::Error::Io { source, .. } => source.to_string(),
            tessera::Error::Image { source, .. } => source.to_string(),
            tessera::Error::Raster { reason, .. } => reason.clone(),
            other => other.to_string(),
        };
        CliError::Input { path, reason }.into()
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input { .. } => 2,
            CliError::Dimensions { .. } => 3,
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = RunConfig::resolve(&cli.global)?;
    match cli.command {
        Command::Eval(args) => eval::run(&config, &args),
        Command::Prepare(args) => prepare::run(&config, &args),
        Command::Synth(args) => tools::synth(&config, &args),
        Command::Overlay(args) => tools::overlay(&config, &args),
        Command::Schedule(args) => tools::schedule(&config, &args),
        Command::Grid(args) => tools::grid(&config, &args),
        Command::Loss(args) => tools::loss(&config, &args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err
                .chain()
                .find_map(|e| e.downcast_ref::<CliError>())
                .map_or(1, CliError::exit_code);
            ExitCode::from(code)
        }
    }
}
