//! Plots written next to the numeric outputs.

use image::{Rgb, RgbImage};
use tactile_core::fem::{ForceField, HexMesh};
use tactile_core::frame::{SensorGeometry, TactileImage};
use tactile_core::plot::{draw_arrow, draw_circle, frame_to_rgb8, heatmap};
use tactile_core::slip::SlipReport;

const REAL: Rgb<u8> = Rgb([40, 220, 60]);
const ESTIMATED: Rgb<u8> = Rgb([60, 140, 255]);
const FLAGGED: Rgb<u8> = Rgb([255, 40, 40]);
const CONTACT: [f64; 3] = [1.0, 0.85, 0.2];

/// Displacement arrows are drawn this many times longer than measured.
pub const ARROW_GAIN: f64 = 4.0;

/// The frame with the contact region tinted, measured (green) and rigidly
/// predicted (blue) marker motion, and slipping markers circled in red.
pub fn slip_overlay(frame: &TactileImage, report: &SlipReport) -> RgbImage {
    let mut img = frame_to_rgb8(frame);
    for (k, px) in img.pixels_mut().enumerate() {
        if report.contact.bits()[k] {
            for c in 0..3 {
                px.0[c] = (0.6 * px.0[c] as f64 + 0.4 * 255.0 * CONTACT[c]).round() as u8;
            }
        }
    }
    let tip = |from: [f64; 2], to: [f64; 2]| {
        [from[0] + ARROW_GAIN * (to[0] - from[0]), from[1] + ARROW_GAIN * (to[1] - from[1])]
    };
    for m in &report.markers {
        draw_arrow(&mut img, m.ref_pos, tip(m.ref_pos, m.estimated_pos), ESTIMATED);
        draw_arrow(&mut img, m.ref_pos, tip(m.ref_pos, m.cur_pos), REAL);
        if m.slipping {
            draw_circle(&mut img, m.cur_pos, 7.0, FLAGGED);
        }
    }
    img
}

/// Tangential top-node forces as arrows over the frame, scaled so the
/// largest arrow spans one mesh cell.
pub fn tangential_overlay(frame: &TactileImage, forces: &ForceField, mesh: &HexMesh, geometry: &SensorGeometry) -> RgbImage {
    let mut img = frame_to_rgb8(frame);
    let peak = forces.top.iter().map(|f| f.fx.hypot(f.fy)).fold(0.0, f64::max);
    if peak <= 0.0 {
        return img;
    }
    let cell = (geometry.sensing_area.0 / mesh.nx as f64).min(geometry.sensing_area.1 / mesh.ny as f64);
    let gain = cell / geometry.pixel_pitch / peak;
    for f in &forces.top {
        let (x, y) = geometry.mm_to_px(f.x, f.y);
        draw_arrow(&mut img, [x, y], [x + gain * f.fx, y + gain * f.fy], FLAGGED);
    }
    img
}

/// Normal top-node force magnitude on the node lattice.
pub fn normal_heatmap(forces: &ForceField, mesh: &HexMesh) -> RgbImage {
    let (w, h) = (mesh.nx + 1, mesh.ny + 1);
    let values: Vec<f64> = forces.top.iter().map(|f| f.fz.abs()).collect();
    debug_assert_eq!(values.len(), w * h);
    let peak = values.iter().copied().fold(0.0, f64::max);
    heatmap(&values, w, h, 0.0, peak, 16)
}
