//! Command-line pipeline around `airl_core`: train an expert, train the AIRL
//! discriminator and novice against its trajectories, then analyse the
//! discriminator's rewards. Each stage writes its artifacts to disk and
//! records them in `manifest.json`.

pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{ConfigHashes, LoadedConfig, PipelineConfig};
pub use error::{CliError, Result};
pub use manifest::{Manifest, Stage};
pub use pipeline::Pipeline;

#[derive(Debug, Parser)]
#[command(name = "airl-interp", version, about = "Expert, AIRL and reward-analysis pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the expert policy and record its trajectories.
    TrainExpert(StageArgs),
    /// Train the discriminator and novice on the expert trajectories.
    TrainAirl(StageArgs),
    /// Score the expert trajectories and write the reward analysis.
    Analyze(StageArgs),
    /// Run all three stages, skipping those already up to date.
    RunAll(StageArgs),
}

#[derive(Debug, Args)]
pub struct StageArgs {
    /// Pipeline configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the root seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run even if earlier stages are missing, incomplete or stale.
    #[arg(long)]
    pub force: bool,
    /// Validate the config and print the stage plan without writing anything.
    #[arg(long)]
    pub dry_run: bool,
    /// Overrides the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    fn parts(&self) -> (&StageArgs, &'static [Stage], bool) {
        match self {
            Command::TrainExpert(a) => (a, &[Stage::TrainExpert], false),
            Command::TrainAirl(a) => (a, &[Stage::TrainAirl], false),
            Command::Analyze(a) => (a, &[Stage::Analyze], false),
            Command::RunAll(a) => (a, &Stage::ALL, true),
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let (args, stages, skip_fresh) = cli.command.parts();
    let mut cfg = LoadedConfig::load(&args.config)?;
    cfg.apply_overrides(args.seed, args.out.clone());
    let pipeline = Pipeline::new(cfg, args.force)?;
    if args.dry_run {
        print!("{}", pipeline.plan(stages, skip_fresh)?);
        return Ok(());
    }
    pipeline.run(stages, skip_fresh)
}
