//! Synthetic tactile sensor.
//!
//! Renders Lambertian three-channel images of a height field lit by colored
//! emitters, with an optional printed marker layer. There are no shadows or
//! interreflections. The renders come paired with exact depth and gradient
//! ground truth and feed every closed-loop test.
//!
//! Frame of reference: the undeformed gel is the plane `z = 0`, `+z` points
//! from the gel toward the camera, and emitters sit on the camera side
//! (`z > 0`). A height field value is the indentation depth seen from the
//! camera, so a pressed sphere appears as a bump toward `+z`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{DepthMap, FrameError, GradientField, SensorGeometry, TactileImage};
use crate::illum::BeamShaping;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("indentation depth {depth} mm exceeds sphere radius {radius} mm")]
    DepthExceedsRadius { depth: f64, radius: f64 },
    #[error("invalid indenter: {0}")]
    InvalidIndenter(String),
    #[error("distortion coefficient {0} outside (-0.5, 0.5)")]
    DistortionOutOfRange(f64),
    #[error("invalid illumination: {0}")]
    InvalidIllumination(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Cosine-lobe exponent whose half-power full angle is `full_angle_deg`.
pub fn lobe_exponent_for_viewing_angle(full_angle_deg: f64) -> f64 {
    0.5f64.ln() / (full_angle_deg.to_radians() / 2.0).cos().ln()
}

/// 60° viewing-angle LED, `s = ln 0.5 / ln cos 30° ≈ 4.82`.
pub fn default_lobe_exponent() -> f64 {
    lobe_exponent_for_viewing_angle(60.0)
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

#[inline]
fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Emitter {
    /// mm, sensing-plane coordinates.
    pub position: [f64; 3],
    /// Emission axis tilt below the horizontal, degrees (90 = straight down).
    pub tilt_deg: f64,
    /// Emission axis azimuth in the plane, degrees from +x toward +y.
    pub azimuth_deg: f64,
    /// Cosine-lobe exponent `s`.
    #[serde(default = "default_lobe_exponent")]
    pub lobe_exponent: f64,
    /// Radiant power, linear units.
    #[serde(default = "one")]
    pub power: f64,
    #[serde(default)]
    pub shaping: BeamShaping,
}

fn one() -> f64 {
    1.0
}

/// An emitter after its beam-shaping feature: where light leaves from, along
/// which axis, and with what lobe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveSource {
    pub origin: [f64; 3],
    pub axis: [f64; 3],
    pub exponent: f64,
    pub power: f64,
}

impl EffectiveSource {
    /// Radiant intensity toward unit direction `dir` (source → target).
    #[inline]
    pub fn lobe(&self, dir: [f64; 3]) -> f64 {
        let c = dot(self.axis, dir);
        if c <= 0.0 {
            0.0
        } else if self.exponent == 0.0 {
            1.0
        } else {
            c.powf(self.exponent)
        }
    }
}

impl Emitter {
    /// Emitter at `position` aimed at the sensing-plane origin's azimuth.
    pub fn aimed_inward(position: [f64; 3], tilt_deg: f64) -> Self {
        Self {
            position,
            tilt_deg,
            azimuth_deg: (-position[1]).atan2(-position[0]).to_degrees(),
            lobe_exponent: default_lobe_exponent(),
            power: 1.0,
            shaping: BeamShaping::default(),
        }
    }

    fn axis_for(tilt_deg: f64, azimuth_deg: f64) -> [f64; 3] {
        let (t, a) = (tilt_deg.to_radians(), azimuth_deg.to_radians());
        [t.cos() * a.cos(), t.cos() * a.sin(), -t.sin()]
    }

    pub fn axis(&self) -> [f64; 3] {
        Self::axis_for(self.tilt_deg, self.azimuth_deg)
    }

    /// Applies the beam-shaping feature: light exits `L` mm along the
    /// original axis, deflected `θ` further toward the sensing plane, with
    /// the half-power half-angle widened by `spread`.
    pub fn effective(&self) -> EffectiveSource {
        let axis0 = self.axis();
        let l = self.shaping.thickness;
        let origin = [
            self.position[0] + l * axis0[0],
            self.position[1] + l * axis0[1],
            self.position[2] + l * axis0[2],
        ];
        let tilt = (self.tilt_deg + self.shaping.deflection_deg).min(90.0);
        let exponent = if self.shaping.spread_deg > 0.0 && self.lobe_exponent > 0.0 {
            let half = 0.5f64.powf(1.0 / self.lobe_exponent).acos();
            let widened = (half + self.shaping.spread_deg.to_radians()).min(89.9f64.to_radians());
            0.5f64.ln() / widened.cos().ln()
        } else {
            self.lobe_exponent
        };
        EffectiveSource {
            origin,
            axis: Self::axis_for(tilt, self.azimuth_deg),
            exponent,
            power: self.power,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IlluminationMode {
    /// Each emitter is a distant light along the direction of its position
    /// vector; no falloff or lobe.
    DirectionalIdeal,
    /// Physical point sources with cosine lobes and inverse-square falloff.
    PointSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IlluminationConfig {
    pub mode: IlluminationMode,
    /// Emitters of the red, green and blue channels.
    pub red: Vec<Emitter>,
    pub green: Vec<Emitter>,
    pub blue: Vec<Emitter>,
    /// Peak flat-surface intensity after exposure normalization (≤ 0.9).
    #[serde(default = "default_exposure_target")]
    pub exposure_target: f64,
}

/// Elevation of the ideal directional lights above the sensing plane.
pub const DEFAULT_LIGHT_ELEVATION_DEG: f64 = 60.0;

fn default_exposure_target() -> f64 {
    0.5
}

impl IlluminationConfig {
    /// Three distant lights at the default elevation, 120° apart in azimuth.
    pub fn directional_ideal() -> Self {
        Self::directional(DEFAULT_LIGHT_ELEVATION_DEG)
    }

    /// Three distant lights at `elevation_deg`, 120° apart in azimuth.
    pub fn directional(elevation_deg: f64) -> Self {
        let light = |az: f64| {
            let (e, a) = (elevation_deg.to_radians(), az.to_radians());
            Emitter {
                position: [e.cos() * a.cos(), e.cos() * a.sin(), e.sin()],
                tilt_deg: elevation_deg,
                azimuth_deg: az + 180.0,
                lobe_exponent: 0.0,
                power: 1.0,
                shaping: BeamShaping::default(),
            }
        };
        Self {
            mode: IlluminationMode::DirectionalIdeal,
            red: vec![light(0.0)],
            green: vec![light(120.0)],
            blue: vec![light(240.0)],
            exposure_target: default_exposure_target(),
        }
    }

    /// One 60° LED per channel on a ring outside the sensing area, 120° apart.
    pub fn point_source_ring(radius_mm: f64, height_mm: f64, tilt_deg: f64) -> Self {
        let led = |az: f64| {
            let a = az.to_radians();
            Emitter::aimed_inward([radius_mm * a.cos(), radius_mm * a.sin(), height_mm], tilt_deg)
        };
        Self {
            mode: IlluminationMode::PointSource,
            red: vec![led(0.0)],
            green: vec![led(120.0)],
            blue: vec![led(240.0)],
            exposure_target: default_exposure_target(),
        }
    }

    pub fn channels(&self) -> [&[Emitter]; 3] {
        [&self.red, &self.green, &self.blue]
    }

    pub fn channels_mut(&mut self) -> [&mut Vec<Emitter>; 3] {
        [&mut self.red, &mut self.green, &mut self.blue]
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.exposure_target > 0.0 && self.exposure_target <= 0.9) {
            return Err(SimError::InvalidIllumination(format!(
                "exposure target {} outside (0, 0.9]",
                self.exposure_target
            )));
        }
        for (c, emitters) in self.channels().iter().enumerate() {
            for e in emitters.iter() {
                if !(e.position[2] > 0.0) {
                    return Err(SimError::InvalidIllumination(format!(
                        "channel {c} emitter at z = {} must sit above the sensing plane",
                        e.position[2]
                    )));
                }
                if !(e.power >= 0.0 && e.lobe_exponent >= 0.0) {
                    return Err(SimError::InvalidIllumination(format!(
                        "channel {c} emitter needs power >= 0 and lobe exponent >= 0"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Multiplies every emitter's power by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for ch in out.channels_mut() {
            for e in ch.iter_mut() {
                e.power *= factor;
            }
        }
        out
    }
}

/// Printed dot grid on the gel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerLayer {
    pub rows: usize,
    pub cols: usize,
    pub spacing_px: f64,
    pub radius_px: f64,
    /// Fraction of light absorbed by a dot, in `[0, 1]`.
    pub absorptance: f64,
    /// Rigid in-plane motion of the whole layer, px.
    #[serde(default)]
    pub offset_px: [f64; 2],
    /// Rotation of the layer about the frame center, degrees.
    #[serde(default)]
    pub rotation_deg: f64,
}

impl MarkerLayer {
    pub fn new(rows: usize, cols: usize, spacing_px: f64, radius_px: f64) -> Self {
        Self {
            rows,
            cols,
            spacing_px,
            radius_px,
            absorptance: 0.8,
            offset_px: [0.0; 2],
            rotation_deg: 0.0,
        }
    }

    /// Dot centers (px) in a `width x height` frame, row-major.
    pub fn centers(&self, width: usize, height: usize) -> Vec<[f64; 2]> {
        let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            for col in 0..self.cols {
                let u = (col as f64 - (self.cols as f64 - 1.0) / 2.0) * self.spacing_px;
                let v = (r as f64 - (self.rows as f64 - 1.0) / 2.0) * self.spacing_px;
                out.push([
                    cx + c * u - s * v + self.offset_px[0],
                    cy + s * u + c * v + self.offset_px[1],
                ]);
            }
        }
        out
    }

    /// Per-pixel dot coverage in `[0, 1]`, 8x8 supersampled.
    pub fn coverage(&self, width: usize, height: usize) -> Vec<f64> {
        let mut cov = vec![0.0; width * height];
        let r = self.radius_px;
        for c in self.centers(width, height) {
            let x0 = (c[0] - r - 1.0).floor().max(0.0) as usize;
            let y0 = (c[1] - r - 1.0).floor().max(0.0) as usize;
            let x1 = ((c[0] + r + 1.0).ceil().max(0.0) as usize).min(width.saturating_sub(1));
            let y1 = ((c[1] + r + 1.0).ceil().max(0.0) as usize).min(height.saturating_sub(1));
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let mut hits = 0;
                    for sy in 0..8 {
                        for sx in 0..8 {
                            let px = x as f64 - 0.5 + (sx as f64 + 0.5) / 8.0;
                            let py = y as f64 - 0.5 + (sy as f64 + 0.5) / 8.0;
                            if (px - c[0]).powi(2) + (py - c[1]).powi(2) <= r * r {
                                hits += 1;
                            }
                        }
                    }
                    let i = y * width + x;
                    cov[i] = f64::max(cov[i], hits as f64 / 64.0);
                }
            }
        }
        cov
    }
}

/// What the camera looks at.
#[derive(Debug, Clone)]
pub struct Scene {
    /// Surface height toward the camera (indentation depth), mm.
    pub height: DepthMap,
    /// Uniform Lambertian albedo in `(0, 1]`.
    pub albedo: f64,
    pub markers: Option<MarkerLayer>,
    pub geometry: SensorGeometry,
}

impl Scene {
    pub fn flat(width: usize, height: usize, geometry: SensorGeometry) -> Self {
        Self {
            height: DepthMap::zeros(width, height),
            albedo: 0.9,
            markers: None,
            geometry,
        }
    }

    pub fn with_height(mut self, height: DepthMap) -> Self {
        self.height = height;
        self
    }

    pub fn with_markers(mut self, markers: Option<MarkerLayer>) -> Self {
        self.markers = markers;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.albedo > 0.0 && self.albedo <= 1.0) {
            return Err(SimError::InvalidScene(format!("albedo {} outside (0, 1]", self.albedo)));
        }
        if self.height.values().iter().any(|v| !v.is_finite()) {
            return Err(SimError::InvalidScene("non-finite height".into()));
        }
        Ok(())
    }
}

/// Height-field gradients by central differences (one-sided at the border).
pub fn height_gradients(height: &DepthMap, pixel_pitch: f64) -> GradientField {
    let (w, h) = (height.width(), height.height());
    let mut g = GradientField::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
            let p = if xr > xl {
                (height.get(xr, y) - height.get(xl, y)) / ((xr - xl) as f64 * pixel_pitch)
            } else {
                0.0
            };
            let q = if yd > yu {
                (height.get(x, yd) - height.get(x, yu)) / ((yd - yu) as f64 * pixel_pitch)
            } else {
                0.0
            };
            g.set(x, y, p, q);
        }
    }
    g
}

/// Pre-exposure radiance per pixel and channel: albedo × Σ irradiance,
/// attenuated by the marker layer.
pub fn render_radiance(scene: &Scene, illum: &IlluminationConfig) -> Vec<[f64; 3]> {
    let (w, h) = (scene.height.width(), scene.height.height());
    let pitch = scene.geometry.pixel_pitch;
    let grads = height_gradients(&scene.height, pitch);
    let coverage = scene.markers.map(|m| (m.coverage(w, h), m.absorptance));
    let channels: Vec<Vec<EffectiveSource>> = illum
        .channels()
        .iter()
        .map(|ch| ch.iter().map(Emitter::effective).collect())
        .collect();
    let directions: Vec<Vec<[f64; 3]>> = illum
        .channels()
        .iter()
        .map(|ch| ch.iter().map(|e| normalize(e.position)).collect())
        .collect();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);

    let mut out = vec![[0.0; 3]; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, px) in row.iter_mut().enumerate() {
            let i = y * w + x;
            let (p, q) = (grads.p()[i], grads.q()[i]);
            let n = normalize([-p, -q, 1.0]);
            let point = [(x as f64 - cx) * pitch, (y as f64 - cy) * pitch, scene.height.values()[i]];
            for c in 0..3 {
                let mut e = 0.0;
                match illum.mode {
                    IlluminationMode::DirectionalIdeal => {
                        for (src, l) in channels[c].iter().zip(&directions[c]) {
                            e += src.power * dot(n, *l).max(0.0);
                        }
                    }
                    IlluminationMode::PointSource => {
                        for src in &channels[c] {
                            let v = [src.origin[0] - point[0], src.origin[1] - point[1], src.origin[2] - point[2]];
                            let d2 = dot(v, v);
                            let l = normalize(v);
                            let lobe = src.lobe([-l[0], -l[1], -l[2]]);
                            e += src.power * lobe * dot(n, l).max(0.0) / d2;
                        }
                    }
                }
                px[c] = scene.albedo * e;
            }
            if let Some((cov, a)) = &coverage {
                let f = 1.0 - a * cov[i];
                for v in px.iter_mut() {
                    *v *= f;
                }
            }
        }
    });
    out
}

/// Exposure constant mapping the flat, marker-free surface's brightest
/// channel value to `illum.exposure_target`.
pub fn exposure(illum: &IlluminationConfig, width: usize, height: usize, geometry: &SensorGeometry, albedo: f64) -> f64 {
    let flat = Scene {
        height: DepthMap::zeros(width, height),
        albedo,
        markers: None,
        geometry: *geometry,
    };
    let peak = render_radiance(&flat, illum)
        .iter()
        .flat_map(|c| c.iter().copied())
        .fold(0.0, f64::max);
    if peak > 0.0 {
        illum.exposure_target / peak
    } else {
        1.0
    }
}

/// Renders the scene to a linear-intensity frame clamped to `[0, 1]`.
pub fn render(scene: &Scene, illum: &IlluminationConfig) -> Result<TactileImage, SimError> {
    scene.validate()?;
    illum.validate()?;
    let (w, h) = (scene.height.width(), scene.height.height());
    let k = exposure(illum, w, h, &scene.geometry, scene.albedo);
    let data = render_radiance(scene, illum)
        .into_iter()
        .map(|c| c.map(|v| (v * k).clamp(0.0, 1.0)))
        .collect();
    Ok(TactileImage::new(w, h, data)?)
}

/// Adds i.i.d. Gaussian pixel noise, clamped to `[0, 1]`.
pub fn add_noise(image: &TactileImage, sigma: f64, seed: u64) -> TactileImage {
    if sigma <= 0.0 {
        return image.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    let mut out = image.clone();
    for px in out.pixels_mut() {
        for v in px.iter_mut() {
            *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    out
}

/// Contact radius (mm) of a sphere pressed `depth` mm into a flat surface.
pub fn contact_radius(radius: f64, depth: f64) -> f64 {
    (radius * radius - (radius - depth).powi(2)).max(0.0).sqrt()
}

fn check_sphere(radius: f64, depth: f64) -> Result<(), SimError> {
    if !(radius > 0.0) || !(depth >= 0.0) {
        return Err(SimError::InvalidIndenter(format!(
            "radius {radius} mm and depth {depth} mm must be positive"
        )));
    }
    if depth > radius {
        return Err(SimError::DepthExceedsRadius { depth, radius });
    }
    Ok(())
}

/// Spherical-cap depth map `z = max(0, √(R² − d²) − (R − depth))`.
pub fn sphere_indenter(
    radius: f64,
    center: [f64; 2],
    depth: f64,
    geometry: &SensorGeometry,
    width: usize,
    height: usize,
) -> Result<DepthMap, SimError> {
    check_sphere(radius, depth)?;
    let pitch = geometry.pixel_pitch;
    let mut z = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let dx = (x as f64 - center[0]) * pitch;
            let dy = (y as f64 - center[1]) * pitch;
            let d2 = dx * dx + dy * dy;
            if d2 < radius * radius {
                z[y * width + x] = ((radius * radius - d2).sqrt() - (radius - depth)).max(0.0);
            }
        }
    }
    Ok(DepthMap::new(width, height, z)?)
}

/// Analytic cap gradients; zero outside the contact circle.
pub fn sphere_gradients(
    radius: f64,
    center: [f64; 2],
    depth: f64,
    geometry: &SensorGeometry,
    width: usize,
    height: usize,
) -> Result<GradientField, SimError> {
    check_sphere(radius, depth)?;
    let pitch = geometry.pixel_pitch;
    let rc = contact_radius(radius, depth);
    let mut g = GradientField::zeros(width, height);
    for y in 0..height {
        for x in 0..width {
            let dx = (x as f64 - center[0]) * pitch;
            let dy = (y as f64 - center[1]) * pitch;
            let d2 = dx * dx + dy * dy;
            if d2 < rc * rc {
                let s = (radius * radius - d2).sqrt();
                g.set(x, y, -dx / s, -dy / s);
            }
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSetSpec {
    pub sphere_radius: f64,
    pub press_depth: f64,
    pub n_positions: usize,
    /// Clearance between contact circles and the frame border, px.
    pub margin_px: f64,
    pub seed: u64,
}

impl Default for CalibrationSetSpec {
    fn default() -> Self {
        Self {
            sphere_radius: 3.0,
            press_depth: 1.0,
            n_positions: 5,
            margin_px: 20.0,
            seed: 0,
        }
    }
}

/// One rendered calibration press with its ground truth.
#[derive(Debug, Clone)]
pub struct CalibrationSample {
    pub image: TactileImage,
    /// px.
    pub center: [f64; 2],
    /// px.
    pub contact_radius_px: f64,
    pub depth: DepthMap,
    pub gradients: GradientField,
}

/// Renders `n_positions` sphere presses at seeded random centers.
pub fn generate_calibration_set(
    spec: &CalibrationSetSpec,
    illum: &IlluminationConfig,
    base: &Scene,
) -> Result<Vec<CalibrationSample>, SimError> {
    let (w, h) = (base.height.width(), base.height.height());
    let pitch = base.geometry.pixel_pitch;
    let rc_px = contact_radius(spec.sphere_radius, spec.press_depth) / pitch;
    let lo = rc_px + spec.margin_px;
    if spec.n_positions > 0 && (2.0 * lo >= w as f64 || 2.0 * lo >= h as f64) {
        return Err(SimError::InvalidIndenter(format!(
            "contact radius {rc_px:.1} px does not fit a {w}x{h} frame"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.n_positions);
    for _ in 0..spec.n_positions {
        let ux = Uniform::new(lo, w as f64 - 1.0 - lo).expect("range");
        let uy = Uniform::new(lo, h as f64 - 1.0 - lo).expect("range");
        let center = [ux.sample(&mut rng), uy.sample(&mut rng)];
        let depth = sphere_indenter(spec.sphere_radius, center, spec.press_depth, &base.geometry, w, h)?;
        let gradients = sphere_gradients(spec.sphere_radius, center, spec.press_depth, &base.geometry, w, h)?;
        let scene = base.clone().with_height(depth.clone());
        out.push(CalibrationSample {
            image: render(&scene, illum)?,
            center,
            contact_radius_px: rc_px,
            depth,
            gradients,
        });
    }
    Ok(out)
}

/// Normalization radius of the division model: half the frame diagonal.
fn division_frame(width: usize, height: usize) -> ([f64; 2], f64) {
    let c = [(width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0];
    (c, c[0].hypot(c[1]))
}

/// Division model: position in the undistorted scene seen at distorted pixel `d`,
/// `u = c + (d − c) / (1 + k1 r_d²)` with `r_d` normalized by the half diagonal.
pub fn division_undistort(d: [f64; 2], k1: f64, width: usize, height: usize) -> [f64; 2] {
    let (c, norm) = division_frame(width, height);
    let (dx, dy) = (d[0] - c[0], d[1] - c[1]);
    let r2 = (dx * dx + dy * dy) / (norm * norm);
    let f = 1.0 / (1.0 + k1 * r2);
    [c[0] + dx * f, c[1] + dy * f]
}

/// Closed-form inverse of [`division_undistort`]. For `k1 > 0` the model only
/// reaches normalized radii up to `1 / (2√k1)`; beyond that the result is NaN.
pub fn division_distort(u: [f64; 2], k1: f64, width: usize, height: usize) -> [f64; 2] {
    let (c, norm) = division_frame(width, height);
    let (ux, uy) = (u[0] - c[0], u[1] - c[1]);
    let ru = ux.hypot(uy) / norm;
    if ru == 0.0 || k1 == 0.0 {
        return u;
    }
    // k1·ru·rd² − rd + ru = 0, root continuous at k1 → 0.
    let rd = 2.0 * ru / (1.0 + (1.0 - 4.0 * k1 * ru * ru).sqrt());
    let s = rd / ru;
    [c[0] + ux * s, c[1] + uy * s]
}

/// Applies radial division-model distortion about the frame center.
pub fn apply_synthetic_distortion(image: &TactileImage, k1: f64) -> Result<TactileImage, SimError> {
    if !(k1.abs() < 0.5) {
        return Err(SimError::DistortionOutOfRange(k1));
    }
    let (w, h) = image.dims();
    let mut data = vec![[0.0; 3]; w * h];
    data.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, px) in row.iter_mut().enumerate() {
            let u = division_undistort([x as f64, y as f64], k1, w, h);
            *px = image.sample_bilinear(u[0], u[1]).unwrap_or([0.0; 3]);
        }
    });
    Ok(TactileImage::new(w, h, data)?)
}
