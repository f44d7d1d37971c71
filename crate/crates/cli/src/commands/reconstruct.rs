use tactile_core::io::{write_rgb8, ElementType, Grid};
use tactile_core::plot::{heatmap, hillshade};

use crate::commands::FramePaths;
use crate::error::Result;
use crate::output::{ensure_dir, write_json};
use crate::process::{DepthSummary, Stages};
use crate::{Ctx, FrameInputs};

/// Height exaggeration of the shaded 3D view.
const RELIEF: f64 = 3.0;

pub fn run(ctx: &Ctx, inputs: &FrameInputs) -> Result<()> {
    let paths = FramePaths::resolve(ctx, inputs, true)?;
    if ctx.dry_run {
        log::info!("dry run: reconstruction inputs present");
        return Ok(());
    }
    let fc = paths.context(ctx, Stages::Depth)?;
    let frame = paths.frame(ctx)?;
    let result = fc.process(frame, Stages::Depth)?;
    let depth = &result.reconstruction.depth;

    let out = ensure_dir(&ctx.out)?;
    Grid::from(depth).write(&out.join("depth.tgrid"), ElementType::F64)?;
    write_rgb8(&out.join("depth_3d.png"), &hillshade(depth, fc.geometry.pixel_pitch, RELIEF))?;
    let peak = depth.max();
    write_rgb8(
        &out.join("depth_heatmap.png"),
        &heatmap(depth.values(), depth.width(), depth.height(), 0.0, peak, 1),
    )?;
    let summary = DepthSummary::new(&result.reconstruction, ctx.cfg.slip.depth_threshold);
    write_json(&out.join("reconstruct.json"), &summary)?;
    log::info!(
        "peak depth {:.4} mm at ({}, {}), fallback fraction {:.4}",
        summary.max,
        summary.argmax[0],
        summary.argmax[1],
        summary.lookup.fallback_fraction
    );
    Ok(())
}
