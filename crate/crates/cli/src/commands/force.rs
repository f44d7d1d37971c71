use tactile_core::io::write_rgb8;

use crate::commands::FramePaths;
use crate::error::Result;
use crate::output::{ensure_dir, write_csv_with, write_json};
use crate::overlay::{normal_heatmap, tangential_overlay};
use crate::process::{ForceSummary, Stages};
use crate::{Ctx, FrameInputs};

pub fn run(ctx: &Ctx, inputs: &FrameInputs) -> Result<()> {
    let paths = FramePaths::resolve(ctx, inputs, true)?;
    if ctx.dry_run {
        log::info!("dry run: force inputs present");
        return Ok(());
    }
    let fc = paths.context(ctx, Stages::Full)?;
    let frame = paths.frame(ctx)?;
    let r = fc.process(frame, Stages::Full)?;
    let fem = fc.fem.as_ref().expect("fem context built");
    let forces = r.forces.as_ref().expect("force stage ran");
    let u = r.displacement.as_ref().expect("force stage ran");

    let out = ensure_dir(&ctx.out)?;
    write_csv_with(&out.join("forces.csv"), |f| forces.write_csv(f))?;
    let summary = ForceSummary::new(forces, u, &fem.mesh);
    write_json(&out.join("force.json"), &summary)?;
    write_rgb8(
        &out.join("force_tangential.png"),
        &tangential_overlay(&r.image, forces, &fem.mesh, &fc.geometry),
    )?;
    write_rgb8(&out.join("force_normal.png"), &normal_heatmap(forces, &fem.mesh))?;
    log::info!(
        "total top force ({:.4e}, {:.4e}, {:.4e}) N",
        summary.total[0],
        summary.total[1],
        summary.total[2]
    );
    Ok(())
}
