//! Command-line workflows over `tactile-core`: rendering synthetic data,
//! calibration, reconstruction, slip and force estimation, illumination
//! design and the full per-frame pipeline.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod overlay;
pub mod process;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::Config;
pub use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "tactile", version, about = "Vision-based tactile sensing toolchain")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory (overrides `[paths] out`, default `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Validate configuration and inputs, then stop without computing.
    #[arg(long, global = true)]
    pub dry_run: bool,
    #[command(subcommand)]
    pub command: Command,
}

/// Frame-pair inputs shared by the per-frame subcommands.
#[derive(Debug, Clone, Default, Args)]
pub struct FrameInputs {
    /// Frame to process.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Undeformed reference frame.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Calibration table written by `calibrate`.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Undistortion map written by `fit-warp`.
    #[arg(long)]
    pub warp: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render synthetic frames, ground truth and optionally a calibration set.
    Render,
    /// Fit an undistortion map from an image of the marker grid.
    FitWarp {
        #[arg(long)]
        image: Option<PathBuf>,
    },
    /// Build a calibration table from a press manifest.
    Calibrate {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        warp: Option<PathBuf>,
    },
    /// Reconstruct the depth map of one frame.
    Reconstruct(FrameInputs),
    /// Classify the contact state of one frame.
    Slip(FrameInputs),
    /// Estimate contact forces for one frame.
    Force(FrameInputs),
    /// Optimize the illumination layout.
    OptimizeIllum,
    /// Run the full pipeline over a directory of frames.
    Pipeline {
        #[command(flatten)]
        inputs: FrameInputs,
        /// Directory of numbered frame images.
        #[arg(long)]
        frames: Option<PathBuf>,
    },
}

/// Resolved global state handed to every subcommand.
pub struct Ctx {
    pub cfg: Config,
    pub out: PathBuf,
    pub dry_run: bool,
}

impl Ctx {
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let mut cfg = match &cli.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        let out = cli
            .out
            .clone()
            .or_else(|| cfg.paths.out.as_deref().map(|p| cfg.resolve(p)))
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok(Self {
            cfg,
            out,
            dry_run: cli.dry_run,
        })
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        // Fails only if a pool already exists, which then keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let ctx = Ctx::from_cli(&cli)?;
    match &cli.command {
        Command::Render => commands::render::run(&ctx),
        Command::FitWarp { image } => commands::fit_warp::run(&ctx, image.as_ref()),
        Command::Calibrate { manifest, warp } => commands::calibrate::run(&ctx, manifest.as_ref(), warp.as_ref()),
        Command::Reconstruct(inputs) => commands::reconstruct::run(&ctx, inputs),
        Command::Slip(inputs) => commands::slip::run(&ctx, inputs),
        Command::Force(inputs) => commands::force::run(&ctx, inputs),
        Command::OptimizeIllum => commands::optimize_illum::run(&ctx),
        Command::Pipeline { inputs, frames } => commands::pipeline::run(&ctx, inputs, frames.as_ref(), cli.jobs),
    }
}
