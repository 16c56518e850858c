//! `xlat`: train, inspect and apply multi-domain translation models.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use xlat_core::Error;

pub use commands::run;
pub use config::{RunConfig, TrainArgs};

#[derive(Debug, Parser)]
#[command(name = "xlat", version, about = "Multi-domain unpaired image translation")]
pub struct Cli {
    /// Directory that holds run folders.
    #[arg(long, global = true, env = "XLAT_OUTPUT_ROOT", default_value = "runs")]
    pub output_root: PathBuf,
    /// TOML file with `train` settings; command-line flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a folder-per-domain dataset or generated data.
    Train(TrainArgs),
    /// Translate one image into one or more domains.
    Translate(commands::TranslateArgs),
    /// Translate one image per domain into every domain and tile the result.
    Grid(commands::GridArgs),
    /// Model counts, epoch budget and pair-sampling statistics for n domains.
    Schedule(commands::ScheduleArgs),
    /// Write a synthetic colour-domain dataset.
    Synth(commands::SynthArgs),
    /// Summarize a checkpoint.
    Inspect(commands::InspectArgs),
}

/// Process exit status for an error: 2 for invalid input or configuration,
/// 3 for data and I/O failures, 4 for divergence.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::TooFewDomains(_)
        | Error::DuplicateDomain(_)
        | Error::UnknownDomain { .. }
        | Error::DomainOutOfRange { .. }
        | Error::Shape(_)
        | Error::InputTooSmall { .. } => 2,
        Error::Data(_)
        | Error::Decode { .. }
        | Error::Io { .. }
        | Error::Checkpoint(_)
        | Error::VersionSkew { .. }
        | Error::Checksum(_) => 3,
        Error::Divergence { .. } => 4,
    }
}
