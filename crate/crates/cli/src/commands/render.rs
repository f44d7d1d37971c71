use serde::Serialize;
use tactile_core::frame::TactileImage;
use tactile_core::io::{write_image, ElementType, Grid};
use tactile_core::simulator::{
    add_noise, apply_synthetic_distortion, contact_radius, generate_calibration_set, render, sphere_indenter,
    IlluminationConfig, MarkerLayer, Scene,
};

use crate::commands::calibrate::{Manifest, ManifestPress};
use crate::config::SensorConfig;
use crate::error::{CliError, Result};
use crate::output::{ensure_dir, write_json};
use crate::Ctx;

#[derive(Serialize)]
struct FrameTruth {
    file: String,
    /// Press center, px, in undistorted coordinates.
    center_px: [f64; 2],
    depth_mm: f64,
    contact_radius_px: f64,
    marker_offset_px: [f64; 2],
    depth_grid: Option<String>,
}

#[derive(Serialize)]
struct Truth<'a> {
    seed: u64,
    sensor: &'a SensorConfig,
    illumination: &'a IlluminationConfig,
    markers: Option<MarkerLayer>,
    sphere_radius_mm: f64,
    noise_sigma: f64,
    distortion_k1: f64,
    reference: &'static str,
    frames: Vec<FrameTruth>,
}

pub fn run(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let r = &cfg.render;
    let geometry = cfg.geometry();
    let (w, h) = (cfg.sensor.width, cfg.sensor.height);
    let illum = cfg.illumination();
    let center0 = r.center_px.unwrap_or([(w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0]);
    let rc_px = contact_radius(r.sphere_radius, r.depth) / geometry.pixel_pitch;
    let centers: Vec<[f64; 2]> = (0..r.frames)
        .map(|i| [center0[0] + i as f64 * r.step_px[0], center0[1] + i as f64 * r.step_px[1]])
        .collect();
    for c in &centers {
        if c[0] - rc_px < 0.0 || c[1] - rc_px < 0.0 || c[0] + rc_px > w as f64 - 1.0 || c[1] + rc_px > h as f64 - 1.0 {
            return Err(CliError::Config(format!(
                "press at ({:.1}, {:.1}) with contact radius {rc_px:.1} px leaves the {w}x{h} frame",
                c[0], c[1]
            )));
        }
    }
    if ctx.dry_run {
        log::info!("dry run: would render {} frame(s) into {}", r.frames, ctx.out.display());
        return Ok(());
    }

    let out = ensure_dir(&ctx.out)?;
    let frames_dir = ensure_dir(&out.join("frames"))?;
    let finish = |img: TactileImage, noise_seed: u64| -> Result<TactileImage> {
        let img = if r.distortion_k1 != 0.0 { apply_synthetic_distortion(&img, r.distortion_k1)? } else { img };
        Ok(add_noise(&img, r.noise_sigma, noise_seed))
    };
    let layer = r.markers.then(|| cfg.markers.layer());
    let reference = render(&Scene::flat(w, h, geometry).with_markers(layer), &illum)?;
    write_image(&out.join("reference.png"), &finish(reference, cfg.seed)?)?;

    let mut truth = Vec::with_capacity(r.frames);
    if r.write_depth && r.frames > 0 {
        ensure_dir(&out.join("truth"))?;
    }
    for (i, &center) in centers.iter().enumerate() {
        let offset = [i as f64 * r.step_px[0], i as f64 * r.step_px[1]];
        let moved = layer.map(|l| MarkerLayer { offset_px: offset, ..l });
        let depth = sphere_indenter(r.sphere_radius, center, r.depth, &geometry, w, h)?;
        let scene = Scene::flat(w, h, geometry).with_markers(moved).with_height(depth.clone());
        let img = finish(render(&scene, &illum)?, cfg.seed.wrapping_add(1 + i as u64))?;
        let file = format!("frame_{i:04}.png");
        write_image(&frames_dir.join(&file), &img)?;
        let depth_grid = if r.write_depth {
            let name = format!("truth/depth_{i:04}.tgrid");
            Grid::from(&depth).write(&out.join(&name), ElementType::F32)?;
            Some(name)
        } else {
            None
        };
        truth.push(FrameTruth {
            file: format!("frames/{file}"),
            center_px: center,
            depth_mm: r.depth,
            contact_radius_px: rc_px,
            marker_offset_px: offset,
            depth_grid,
        });
    }
    write_json(
        &out.join("truth.json"),
        &Truth {
            seed: cfg.seed,
            sensor: &cfg.sensor,
            illumination: &illum,
            markers: layer,
            sphere_radius_mm: r.sphere_radius,
            noise_sigma: r.noise_sigma,
            distortion_k1: r.distortion_k1,
            reference: "reference.png",
            frames: truth,
        },
    )?;

    if let Some(spec) = &cfg.calibration_set {
        let spec = tactile_core::simulator::CalibrationSetSpec { seed: cfg.seed, ..*spec };
        let dir = ensure_dir(&out.join("calibration"))?;
        // Calibration presses are rendered without markers.
        let base = Scene::flat(w, h, geometry);
        let samples = generate_calibration_set(&spec, &illum, &base)?;
        let noise_base = cfg.seed.wrapping_add(1_000_000);
        write_image(&dir.join("reference.png"), &finish(render(&base, &illum)?, noise_base)?)?;
        let mut presses = Vec::with_capacity(samples.len());
        for (i, s) in samples.into_iter().enumerate() {
            let file = format!("press_{i:02}.png");
            write_image(&dir.join(&file), &finish(s.image, noise_base.wrapping_add(1 + i as u64))?)?;
            presses.push(ManifestPress {
                image: file.into(),
                center_px: s.center,
                contact_radius_px: s.contact_radius_px,
            });
        }
        write_json(
            &dir.join("manifest.json"),
            &Manifest {
                sphere_radius_mm: spec.sphere_radius,
                reference: "reference.png".into(),
                presses,
            },
        )?;
        log::info!("wrote {} calibration presses to {}", spec.n_positions, dir.display());
    }
    log::info!("rendered {} frame(s) into {}", r.frames, out.display());
    Ok(())
}
