//! Command-line entry points and the annotation HTTP server.

pub mod commands;
pub mod config;
pub mod error;
pub mod server;
pub mod training;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "brainqc", version, about = "Quality control for 3D T1-weighted brain MRI")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// JSON or TOML config file; relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file or directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

impl Common {
    pub fn out_or(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select T1w images with enough slices from a metadata catalog.
    Select(CommonArgs),
    /// Resample, register, rescale and crop volumes.
    Preprocess(CommonArgs),
    /// Generate a labelled phantom dataset.
    Synth(CommonArgs),
    /// Serve the annotation API.
    ServeAnnotate(CommonArgs),
    /// Merge the two raters' annotations into consensus labels.
    Consensus(CommonArgs),
    /// Inter-rater agreement per characteristic.
    Kappa(CommonArgs),
    /// Train one task's network over the cross-validation folds.
    Train(CommonArgs),
    /// Score saved checkpoints on the test set.
    Evaluate(CommonArgs),
    /// Test-set balanced accuracy against training-set size.
    LearningCurve(CommonArgs),
    /// Compare manual gadolinium labels with description keywords.
    AuditGado(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[command(flatten)]
    pub common: Common,
}

/// Runs a subcommand and returns its JSON summary.
pub fn run(command: &Command) -> Result<Value, CliError> {
    match command {
        Command::Select(a) => commands::select(&a.common),
        Command::Preprocess(a) => commands::preprocess(&a.common),
        Command::Synth(a) => commands::synth(&a.common),
        Command::ServeAnnotate(a) => server::serve(&a.common),
        Command::Consensus(a) => commands::consensus(&a.common),
        Command::Kappa(a) => commands::kappa(&a.common),
        Command::Train(a) => training::train(&a.common),
        Command::Evaluate(a) => training::evaluate(&a.common),
        Command::LearningCurve(a) => training::learning_curve(&a.common),
        Command::AuditGado(a) => commands::audit_gado(&a.common),
    }
}
