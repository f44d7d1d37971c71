//! Illumination design: receiver-mesh irradiance, uniformity metrics and a
//! bounded optimization of one LED pose plus beam-shaping parameters shared by
//! the three color channels.
//!
//! Coordinates are sensing-plane millimetres with the origin at the center of
//! the sensing area. The optimization's `z` is measured from the bottom face
//! of the lens, which sits `standoff_mm` above the receiver plane.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::SensorGeometry;
use crate::io::IoError;
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::plot;
use crate::simulator::{default_lobe_exponent, Emitter, IlluminationConfig, IlluminationMode};

#[derive(Debug, Error)]
pub enum IllumError {
    #[error("emitter {index} of channel {channel} sits on or below the sensing plane")]
    EmitterOnPlane { channel: usize, index: usize },
    #[error("receiver mesh carries no flux")]
    ZeroFlux,
    #[error("budget {budget} is below the simplex size {required}")]
    BudgetTooSmall { budget: usize, required: usize },
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Abstract beam-shaping feature in front of an emitter.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamShaping {
    /// Feature thickness `L`, mm.
    pub thickness: f64,
    /// Extra downward deflection `θ` of the emission axis, degrees.
    pub deflection_deg: f64,
    /// Widening of the half-power half-angle, degrees.
    pub spread_deg: f64,
}

/// Feasible box of the optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptBounds {
    /// Lens thickness `t₁`: `0 ≤ z ≤ t₁`.
    pub lens_thickness: f64,
    /// Shaping-feature limit `t₂`: `0 ≤ L ≤ t₂`.
    pub feature_thickness: f64,
    pub alpha_deg: [f64; 2],
    pub theta_deg: [f64; 2],
    /// Upper bound on the lobe widening; the lower bound is 0.
    pub spread_max_deg: f64,
    /// Anchor `m`: `x = m_x`, `y ≥ m_y`.
    pub anchor: [f64; 2],
    /// Upper bound on `y`.
    pub y_max: f64,
}

impl Default for OptBounds {
    fn default() -> Self {
        Self {
            lens_thickness: 5.0,
            feature_thickness: 2.0,
            alpha_deg: [0.0, 90.0],
            theta_deg: [0.0, 90.0],
            spread_max_deg: 45.0,
            anchor: [-4.0, -4.0],
            y_max: 20.0,
        }
    }
}

impl OptBounds {
    pub fn validate(&self) -> Result<(), IllumError> {
        let ok = self.lens_thickness >= 0.0
            && self.feature_thickness >= 0.0
            && 0.0 <= self.alpha_deg[0]
            && self.alpha_deg[0] <= self.alpha_deg[1]
            && self.alpha_deg[1] <= 90.0
            && 0.0 <= self.theta_deg[0]
            && self.theta_deg[0] <= self.theta_deg[1]
            && self.theta_deg[1] <= 90.0
            && self.spread_max_deg >= 0.0
            && self.y_max >= self.anchor[1]
            && self.anchor.iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(IllumError::InvalidBounds(format!("{self:?}")))
        }
    }

    /// `(lo, hi)` per parameter in [`IllumParams::to_vec`] order.
    pub fn limits(&self) -> [(f64, f64); 7] {
        [
            (self.anchor[0], self.anchor[0]),
            (self.anchor[1], self.y_max),
            (0.0, self.lens_thickness),
            (self.alpha_deg[0], self.alpha_deg[1]),
            (0.0, self.feature_thickness),
            (self.theta_deg[0], self.theta_deg[1]),
            (0.0, self.spread_max_deg),
        ]
    }

    pub fn project(&self, p: &IllumParams) -> IllumParams {
        let mut v = p.to_vec();
        for (x, (lo, hi)) in v.iter_mut().zip(self.limits()) {
            *x = if x.is_nan() { lo } else { x.clamp(lo, hi) };
        }
        IllumParams::from_vec(&v)
    }

    pub fn contains(&self, p: &IllumParams) -> bool {
        p.to_vec().iter().zip(self.limits()).all(|(x, (lo, hi))| lo <= *x && *x <= hi)
    }
}

/// The shared parameter vector `(x, y, z, α, L, θ, spread)` of the red
/// channel; green and blue are the same layout rotated by 120° and 240°.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IllumParams {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub alpha_deg: f64,
    pub shaping: BeamShaping,
}

impl IllumParams {
    pub fn to_vec(&self) -> [f64; 7] {
        [
            self.x,
            self.y,
            self.z,
            self.alpha_deg,
            self.shaping.thickness,
            self.shaping.deflection_deg,
            self.shaping.spread_deg,
        ]
    }

    pub fn from_vec(v: &[f64]) -> Self {
        Self {
            x: v[0],
            y: v[1],
            z: v[2],
            alpha_deg: v[3],
            shaping: BeamShaping {
                thickness: v[4],
                deflection_deg: v[5],
                spread_deg: v[6],
            },
        }
    }

    /// Clustered emitters aimed horizontally at the bottom of their range.
    pub fn skewed(bounds: &OptBounds) -> Self {
        Self {
            x: bounds.anchor[0],
            y: bounds.anchor[1],
            z: bounds.lens_thickness.min(2.0),
            alpha_deg: bounds.alpha_deg[0],
            shaping: BeamShaping::default(),
        }
    }
}

/// Fixed, non-optimized parts of the optical layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IllumSetup {
    /// Height of the lens bottom face above the receiver plane, mm.
    pub standoff_mm: f64,
    pub lobe_exponent: f64,
    /// Radiant power of every emitter.
    pub power: f64,
}

impl Default for IllumSetup {
    fn default() -> Self {
        Self {
            standoff_mm: 2.5,
            lobe_exponent: default_lobe_exponent(),
            power: 1.0,
        }
    }
}

fn rotate(p: [f64; 2], deg: f64) -> [f64; 2] {
    let (s, c) = deg.to_radians().sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

/// Azimuth (degrees) of the in-plane direction from the anchor toward the
/// sensing-area center; `0` when the anchor is the center.
pub fn inward_azimuth(anchor: [f64; 2]) -> f64 {
    if anchor == [0.0, 0.0] {
        0.0
    } else {
        (-anchor[1]).atan2(-anchor[0]).to_degrees()
    }
}

/// Red-channel emitter for `params`, rotated by `channel · 120°`.
pub fn channel_emitter(params: &IllumParams, bounds: &OptBounds, setup: &IllumSetup, channel: usize) -> Emitter {
    let rot = 120.0 * channel as f64;
    let xy = rotate([params.x, params.y], rot);
    Emitter {
        position: [xy[0], xy[1], setup.standoff_mm + params.z],
        tilt_deg: params.alpha_deg,
        azimuth_deg: inward_azimuth(bounds.anchor) + rot,
        lobe_exponent: setup.lobe_exponent,
        power: setup.power,
        shaping: params.shaping,
    }
}

/// Point-source configuration with one emitter per channel.
pub fn build_config(params: &IllumParams, bounds: &OptBounds, setup: &IllumSetup) -> IlluminationConfig {
    let e = |c| vec![channel_emitter(params, bounds, setup, c)];
    IlluminationConfig {
        mode: IlluminationMode::PointSource,
        red: e(0),
        green: e(1),
        blue: e(2),
        exposure_target: 0.5,
    }
}

pub const MESH_BINS: usize = 25;
const SUBSAMPLES: usize = 4;

/// Binned flux on the sensing surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverMesh {
    pub nx: usize,
    pub ny: usize,
    /// Sensing-area extent `(width, height)`, mm.
    pub extent: (f64, f64),
    /// Row-major per-bin `[R, G, B]` flux.
    pub flux: Vec<[f64; 3]>,
}

impl ReceiverMesh {
    pub fn new(nx: usize, ny: usize, extent: (f64, f64), flux: Vec<[f64; 3]>) -> Self {
        assert_eq!(flux.len(), nx * ny);
        Self { nx, ny, extent, flux }
    }

    pub fn bin_size(&self) -> (f64, f64) {
        (self.extent.0 / self.nx as f64, self.extent.1 / self.ny as f64)
    }

    /// Bin center, mm.
    pub fn bin_center(&self, i: usize, j: usize) -> [f64; 2] {
        let (bw, bh) = self.bin_size();
        [
            -self.extent.0 / 2.0 + (i as f64 + 0.5) * bw,
            -self.extent.1 / 2.0 + (j as f64 + 0.5) * bh,
        ]
    }

    pub fn totals(&self) -> Vec<f64> {
        self.flux.iter().map(|f| f[0] + f[1] + f[2]).collect()
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.flux.iter().map(|f| f[c]).collect()
    }

    /// Heatmap PNGs (combined total, each channel, and a true-color view) plus
    /// one CSV with all bins. Files are named `{prefix}_*.png|csv`.
    pub fn write_heatmaps(&self, dir: &Path, prefix: &str) -> Result<(), IllumError> {
        let totals = self.totals();
        let peak = totals.iter().copied().fold(0.0, f64::max);
        let scale = 16;
        let save = |name: &str, img: &image::RgbImage| crate::io::write_rgb8(&dir.join(format!("{prefix}_{name}.png")), img);
        save("total", &plot::heatmap(&totals, self.nx, self.ny, 0.0, peak, scale))?;
        let chan_peak = self.flux.iter().flat_map(|f| f.iter().copied()).fold(0.0, f64::max);
        for (c, name) in ["red", "green", "blue"].iter().enumerate() {
            save(name, &plot::heatmap(&self.channel(c), self.nx, self.ny, 0.0, chan_peak, scale))?;
        }
        let color: Vec<[f64; 3]> = self
            .flux
            .iter()
            .map(|f| if chan_peak > 0.0 { f.map(|v| v / chan_peak) } else { [0.0; 3] })
            .collect();
        save("color", &plot::color_grid(&color, self.nx, self.ny, scale))?;

        let path = dir.join(format!("{prefix}_mesh.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(IoError::from)?;
        w.write_record(["i", "j", "x_mm", "y_mm", "red", "green", "blue", "total"])
            .map_err(IoError::from)?;
        for j in 0..self.ny {
            for i in 0..self.nx {
                let f = self.flux[j * self.nx + i];
                let c = self.bin_center(i, j);
                w.write_record([
                    i.to_string(),
                    j.to_string(),
                    c[0].to_string(),
                    c[1].to_string(),
                    f[0].to_string(),
                    f[1].to_string(),
                    f[2].to_string(),
                    (f[0] + f[1] + f[2]).to_string(),
                ])
                .map_err(IoError::from)?;
            }
        }
        w.flush().map_err(|e| IoError::Io { path: path.display().to_string(), source: e })?;
        Ok(())
    }
}

/// Irradiance integrated over each bin of a 25x25 mesh on the sensing area.
pub fn irradiance_mesh(config: &IlluminationConfig, geometry: &SensorGeometry) -> Result<ReceiverMesh, IllumError> {
    irradiance_mesh_with(config, geometry.sensing_area, MESH_BINS, MESH_BINS)
}

/// [`irradiance_mesh`] with an explicit extent (mm) and bin counts.
pub fn irradiance_mesh_with(
    config: &IlluminationConfig,
    extent: (f64, f64),
    nx: usize,
    ny: usize,
) -> Result<ReceiverMesh, IllumError> {
    let mut sources = Vec::new();
    for (c, emitters) in config.channels().iter().enumerate() {
        for (index, e) in emitters.iter().enumerate() {
            let s = e.effective();
            if !(s.origin[2] > 0.0) {
                return Err(IllumError::EmitterOnPlane { channel: c, index });
            }
            sources.push((c, s));
        }
    }
    let mut mesh = ReceiverMesh::new(nx, ny, extent, vec![[0.0; 3]; nx * ny]);
    let (bw, bh) = mesh.bin_size();
    let sample_area = bw * bh / (SUBSAMPLES * SUBSAMPLES) as f64;
    let centers: Vec<[f64; 2]> = (0..nx * ny).map(|k| mesh.bin_center(k % nx, k / nx)).collect();
    mesh.flux.par_iter_mut().zip(centers).for_each(|(flux, c)| {
        for sy in 0..SUBSAMPLES {
            for sx in 0..SUBSAMPLES {
                let px = c[0] - bw / 2.0 + (sx as f64 + 0.5) * bw / SUBSAMPLES as f64;
                let py = c[1] - bh / 2.0 + (sy as f64 + 0.5) * bh / SUBSAMPLES as f64;
                for (ch, s) in &sources {
                    let v = [px - s.origin[0], py - s.origin[1], -s.origin[2]];
                    let d2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
                    let d = d2.sqrt();
                    let dir = [v[0] / d, v[1] / d, v[2] / d];
                    let cos_in = s.origin[2] / d;
                    flux[*ch] += s.power * s.lobe(dir) * cos_in / d2 * sample_area;
                }
            }
        }
    });
    Ok(mesh)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IlluminationMetrics {
    /// Coefficient of variation of per-bin total flux.
    pub sigma: f64,
    /// Flux-weighted mean chromaticity `(R/T, G/T)`.
    pub cie_mean: [f64; 2],
    /// Flux-weighted centroid, mm.
    pub centroid: [f64; 2],
}

pub fn metrics(mesh: &ReceiverMesh) -> Result<IlluminationMetrics, IllumError> {
    let totals = mesh.totals();
    let sum: f64 = totals.iter().sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(IllumError::ZeroFlux);
    }
    let n = totals.len() as f64;
    let mean = sum / n;
    let var = totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    let (r, g) = mesh
        .flux
        .iter()
        .fold((0.0, 0.0), |(r, g), f| (r + f[0], g + f[1]));
    let mut centroid = [0.0; 2];
    for j in 0..mesh.ny {
        for i in 0..mesh.nx {
            let c = mesh.bin_center(i, j);
            let t = totals[j * mesh.nx + i];
            centroid[0] += t * c[0];
            centroid[1] += t * c[1];
        }
    }
    Ok(IlluminationMetrics {
        sigma: var.sqrt() / mean,
        cie_mean: [r / sum, g / sum],
        centroid: [centroid[0] / sum, centroid[1] / sum],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostWeights {
    pub sigma: f64,
    pub chromaticity: f64,
    pub centroid: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            chromaticity: 1.0,
            centroid: 1.0,
        }
    }
}

/// Cost assigned to configurations that deliver no flux.
pub const ZERO_FLUX_COST: f64 = 1e6;

/// `w₁σ² + w₂‖cie − (⅓, ⅓)‖² + w₃‖G‖² / diag²`.
pub fn cost_from_metrics(m: &IlluminationMetrics, extent: (f64, f64), w: &CostWeights) -> f64 {
    let third = 1.0 / 3.0;
    let chroma = (m.cie_mean[0] - third).powi(2) + (m.cie_mean[1] - third).powi(2);
    let diag2 = extent.0 * extent.0 + extent.1 * extent.1;
    let g = (m.centroid[0].powi(2) + m.centroid[1].powi(2)) / diag2;
    w.sigma * m.sigma * m.sigma + w.chromaticity * chroma + w.centroid * g
}

pub fn cost(config: &IlluminationConfig, geometry: &SensorGeometry, w: &CostWeights) -> f64 {
    match irradiance_mesh(config, geometry).and_then(|m| metrics(&m)) {
        Ok(m) => cost_from_metrics(&m, geometry.sensing_area, w),
        Err(_) => ZERO_FLUX_COST,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub eval: usize,
    pub f: f64,
    pub best_f: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizeResult {
    pub initial: IllumParams,
    pub best: IllumParams,
    pub config: IlluminationConfig,
    pub f_initial: f64,
    pub f_best: f64,
    pub metrics_initial: Option<IlluminationMetrics>,
    pub metrics_best: Option<IlluminationMetrics>,
    pub evaluations: usize,
    #[serde(skip)]
    pub trace: Vec<TraceEntry>,
    #[serde(skip)]
    pub mesh_before: ReceiverMesh,
    #[serde(skip)]
    pub mesh_after: ReceiverMesh,
}

impl OptimizeResult {
    pub fn write_trace_csv(&self, path: &Path) -> Result<(), IllumError> {
        let mut w = csv::Writer::from_path(path).map_err(IoError::from)?;
        for t in &self.trace {
            w.serialize(t).map_err(IoError::from)?;
        }
        w.flush().map_err(|e| IoError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeOptions {
    /// Maximum cost evaluations, including the initial simplex.
    pub budget: usize,
    pub weights: CostWeights,
    pub setup: IllumSetup,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            budget: 500,
            weights: CostWeights::default(),
            setup: IllumSetup::default(),
        }
    }
}

const STEPS: [f64; 7] = [0.0, 3.0, 1.0, 15.0, 0.5, 15.0, 10.0];

/// Nelder–Mead over the free parameters; pinned ones (`x`, and any bound
/// with zero width) stay at their projected initial value.
pub fn optimize(
    initial: &IllumParams,
    bounds: &OptBounds,
    geometry: &SensorGeometry,
    opts: &OptimizeOptions,
) -> Result<OptimizeResult, IllumError> {
    bounds.validate()?;
    if initial.to_vec().iter().any(|v| !v.is_finite()) {
        return Err(IllumError::InvalidParams("non-finite initial parameters".into()));
    }
    let start = bounds.project(initial);
    let limits = bounds.limits();
    let free: Vec<usize> = (0..7).filter(|&k| limits[k].1 > limits[k].0).collect();
    let required = free.len() + 1;
    if opts.budget < required {
        return Err(IllumError::BudgetTooSmall {
            budget: opts.budget,
            required,
        });
    }

    let base = start.to_vec();
    let expand = |v: &[f64]| {
        let mut full = base;
        for (k, &i) in free.iter().enumerate() {
            full[i] = v[k];
        }
        IllumParams::from_vec(&full)
    };
    let f = |v: &[f64]| {
        let p = expand(v);
        cost(&build_config(&p, bounds, &opts.setup), geometry, &opts.weights)
    };
    let project = |v: &mut [f64]| {
        for (k, &i) in free.iter().enumerate() {
            let (lo, hi) = limits[i];
            v[k] = if v[k].is_nan() { lo } else { v[k].clamp(lo, hi) };
        }
    };
    let x0: Vec<f64> = free.iter().map(|&i| base[i]).collect();
    let steps: Vec<f64> = free
        .iter()
        .map(|&i| {
            let (lo, hi) = limits[i];
            let s = STEPS[i].min((hi - lo) / 2.0);
            if base[i] + s > hi {
                -s
            } else {
                s
            }
        })
        .collect();
    let nm = nelder_mead(
        &f,
        &x0,
        &steps,
        &project,
        &NelderMeadOptions {
            max_evals: opts.budget,
            ..Default::default()
        },
    )
    .ok_or(IllumError::BudgetTooSmall {
        budget: opts.budget,
        required,
    })?;

    let f_initial = nm.trace[0].0;
    let best = bounds.project(&expand(&nm.x));
    let config = build_config(&best, bounds, &opts.setup);
    let mesh_before = irradiance_mesh(&build_config(&start, bounds, &opts.setup), geometry)?;
    let mesh_after = irradiance_mesh(&config, geometry)?;
    Ok(OptimizeResult {
        initial: start,
        best,
        config,
        f_initial,
        f_best: nm.f,
        metrics_initial: metrics(&mesh_before).ok(),
        metrics_best: metrics(&mesh_after).ok(),
        evaluations: nm.evals,
        trace: nm
            .trace
            .iter()
            .enumerate()
            .map(|(i, &(f, best_f))| TraceEntry { eval: i, f, best_f })
            .collect(),
        mesh_before,
        mesh_after,
    })
}
