use std::path::PathBuf;

use serde::Serialize;
use tactile_core::distortion::{associate, detect_markers, fit_undistortion_model, GridSpec};
use tactile_core::io::ElementType;

use crate::error::Result;
use crate::output::{ensure_dir, write_csv_with, write_json};
use crate::process::{check_dims, load_image};
use crate::Ctx;

#[derive(Serialize)]
struct WarpReport {
    grid: GridSpec,
    detected: usize,
    associated: usize,
    /// Largest displacement of the map from identity, px.
    max_offset_px: f64,
    /// Largest distance from a detected marker to its ideal node, px.
    max_marker_offset_px: f64,
}

pub const WARP_FILE: &str = "warp.tgrid";

pub fn run(ctx: &Ctx, image: Option<&PathBuf>) -> Result<()> {
    let cfg = &ctx.cfg;
    let path = cfg.require(image, &cfg.paths.image, "marker grid image")?;
    let img = load_image(&path)?;
    check_dims(&img, cfg, "marker grid image")?;
    let grid = cfg.markers.grid();
    if ctx.dry_run {
        log::info!("dry run: {} is a valid {}x{} frame", path.display(), img.width(), img.height());
        return Ok(());
    }
    let (w, h) = img.dims();
    let detected = detect_markers(&img, &cfg.detection)?;
    let assoc = associate(&detected, &grid)?;
    let model = fit_undistortion_model(&detected, &grid, w, h)?;
    let map = model.to_warp_map(w, h);
    map.validate(8)?;

    let out = ensure_dir(&ctx.out)?;
    map.to_grid().write(&out.join(WARP_FILE), ElementType::F64)?;
    let mut max_marker = 0.0f64;
    write_csv_with(&out.join("markers.csv"), |f| {
        use std::io::Write;
        writeln!(f, "row,col,x,y,ideal_x,ideal_y")?;
        for m in &assoc.markers {
            let (r, c) = m.grid.expect("associated markers carry a node");
            let n = grid.node(r, c, w, h);
            max_marker = max_marker.max((m.x - n[0]).hypot(m.y - n[1]));
            writeln!(f, "{r},{c},{},{},{},{}", m.x, m.y, n[0], n[1])?;
        }
        Ok::<(), std::io::Error>(())
    })?;
    let report = WarpReport {
        grid,
        detected: detected.len(),
        associated: assoc.len(),
        max_offset_px: map.max_offset(),
        max_marker_offset_px: max_marker,
    };
    write_json(&out.join("warp.json"), &report)?;
    log::info!(
        "warp fitted from {} markers, max offset {:.3} px",
        report.associated,
        report.max_offset_px
    );
    Ok(())
}
