use serde::Serialize;
use tactile_core::io::write_rgb8;
use tactile_core::slip::SlipReport;

use crate::commands::FramePaths;
use crate::error::Result;
use crate::output::{ensure_dir, write_csv_with, write_json};
use crate::overlay::slip_overlay;
use crate::process::{MarkerSummary, SlipSummary, Stages};
use crate::{Ctx, FrameInputs};

#[derive(Serialize)]
struct SlipOutput<'a> {
    summary: SlipSummary,
    markers: MarkerSummary,
    report: &'a SlipReport,
}

pub fn run(ctx: &Ctx, inputs: &FrameInputs) -> Result<()> {
    let paths = FramePaths::resolve(ctx, inputs, true)?;
    if ctx.dry_run {
        log::info!("dry run: slip inputs present");
        return Ok(());
    }
    let fc = paths.context(ctx, Stages::Slip)?;
    let frame = paths.frame(ctx)?;
    let r = fc.process(frame, Stages::Slip)?;
    let (report, motion, markers) = (
        r.slip.as_ref().expect("slip stage ran"),
        r.motion.as_ref().expect("tracking ran"),
        r.markers.as_ref().expect("markers detected"),
    );

    let out = ensure_dir(&ctx.out)?;
    let summary = SlipSummary::new(report);
    write_json(
        &out.join("slip.json"),
        &SlipOutput {
            summary: summary.clone(),
            markers: MarkerSummary::new(markers, motion),
            report,
        },
    )?;
    write_csv_with(&out.join("motion.csv"), |f| motion.write_csv(f))?;
    write_rgb8(&out.join("slip_overlay.png"), &slip_overlay(&r.image, report))?;
    log::info!(
        "{:?}: {} of {} contact markers flagged",
        summary.state,
        summary.flagged.len(),
        summary.contact_markers
    );
    Ok(())
}
