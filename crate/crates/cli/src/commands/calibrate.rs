use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tactile_core::distortion::apply_warp;
use tactile_core::photostereo::{calibrate, PhotostereoError, Press, TableMetadata};

use crate::error::{CliError, Result};
use crate::output::{ensure_dir, write_json};
use crate::process::{check_dims, load_image, load_warp};
use crate::Ctx;

/// A calibration set on disk; image paths are relative to the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub sphere_radius_mm: f64,
    pub reference: PathBuf,
    pub presses: Vec<ManifestPress>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestPress {
    pub image: PathBuf,
    /// px, in undistorted coordinates.
    pub center_px: [f64; 2],
    pub contact_radius_px: f64,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::input(path, format!("malformed manifest: {e}")))
    }
}

#[derive(Serialize)]
struct Coverage<'a> {
    table: String,
    #[serde(flatten)]
    metadata: &'a TableMetadata,
    bins_total: usize,
}

pub const TABLE_FILE: &str = "table.ctab";

pub fn run(ctx: &Ctx, manifest: Option<&PathBuf>, warp: Option<&PathBuf>) -> Result<()> {
    let cfg = &ctx.cfg;
    let manifest_path = cfg.require(manifest, &cfg.paths.manifest, "calibration manifest")?;
    let warp_path = cfg.pick(warp, &cfg.paths.warp);
    let m = Manifest::load(&manifest_path)?;
    if m.presses.is_empty() {
        return Err(CliError::Input(format!("{}: {}", manifest_path.display(), PhotostereoError::NoPresses)));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
    let files: Vec<PathBuf> = std::iter::once(resolve(&m.reference))
        .chain(m.presses.iter().map(|p| resolve(&p.image)))
        .collect();
    for f in files.iter().chain(&warp_path) {
        if !f.is_file() {
            return Err(CliError::input(f, "no such file"));
        }
    }
    if ctx.dry_run {
        log::info!("dry run: manifest with {} presses is complete", m.presses.len());
        return Ok(());
    }

    let warp = warp_path.as_deref().map(load_warp).transpose()?;
    let load = |p: &Path| -> Result<_> {
        let img = load_image(p)?;
        check_dims(&img, cfg, &p.display().to_string())?;
        Ok(match &warp {
            Some(w) => apply_warp(&img, w)?,
            None => img,
        })
    };
    let reference = load(&files[0])?;
    let presses = m
        .presses
        .iter()
        .zip(&files[1..])
        .map(|(p, f)| {
            Ok(Press {
                image: load(f)?,
                center: p.center_px,
                contact_radius_px: p.contact_radius_px,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let table = calibrate(&presses, &reference, &cfg.geometry(), m.sphere_radius_mm, &cfg.calibration)?;

    let out = ensure_dir(&ctx.out)?;
    table.save(&out.join(TABLE_FILE))?;
    let meta = table.metadata();
    write_json(
        &out.join("coverage.json"),
        &Coverage {
            table: TABLE_FILE.into(),
            metadata: meta,
            bins_total: table.quantization().len(),
        },
    )?;
    log::info!(
        "calibrated from {} presses: {} of {} bins populated ({:.2}%)",
        meta.presses,
        meta.populated_bins,
        table.quantization().len(),
        100.0 * meta.coverage
    );
    Ok(())
}
