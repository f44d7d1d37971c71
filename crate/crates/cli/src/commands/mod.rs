pub mod calibrate;
pub mod fit_warp;
pub mod force;
pub mod optimize_illum;
pub mod pipeline;
pub mod reconstruct;
pub mod render;
pub mod slip;

use std::path::PathBuf;

use tactile_core::frame::TactileImage;

use crate::error::{CliError, Result};
use crate::process::{check_dims, load_image, load_table, load_warp, FrameContext, Stages};
use crate::{Ctx, FrameInputs};

/// Resolved input paths of a per-frame command.
pub struct FramePaths {
    pub image: Option<PathBuf>,
    pub reference: PathBuf,
    pub table: PathBuf,
    pub warp: Option<PathBuf>,
}

impl FramePaths {
    pub fn resolve(ctx: &Ctx, inputs: &FrameInputs, need_image: bool) -> Result<Self> {
        let cfg = &ctx.cfg;
        let paths = Self {
            image: if need_image {
                Some(cfg.require(inputs.image.as_ref(), &cfg.paths.image, "input frame")?)
            } else {
                None
            },
            reference: cfg.require(inputs.reference.as_ref(), &cfg.paths.reference, "reference frame")?,
            table: cfg.require(inputs.table.as_ref(), &cfg.paths.table, "calibration table")?,
            warp: cfg.pick(inputs.warp.as_ref(), &cfg.paths.warp),
        };
        for p in paths.image.iter().chain([&paths.reference, &paths.table]).chain(&paths.warp) {
            if !p.is_file() {
                return Err(CliError::input(p, "no such file"));
            }
        }
        Ok(paths)
    }

    /// Loads the read-only state shared by every frame.
    pub fn context(&self, ctx: &Ctx, stages: Stages) -> Result<FrameContext> {
        let reference = load_image(&self.reference)?;
        let table = load_table(&self.table)?;
        let warp = self.warp.as_deref().map(load_warp).transpose()?;
        FrameContext::build(&ctx.cfg, reference, table, warp, stages)
    }

    pub fn frame(&self, ctx: &Ctx) -> Result<TactileImage> {
        let path = self.image.as_deref().expect("frame path resolved");
        let img = load_image(path)?;
        check_dims(&img, &ctx.cfg, "input frame")?;
        Ok(img)
    }
}
