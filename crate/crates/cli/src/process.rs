//! Per-frame processing shared by `reconstruct`, `slip`, `force` and
//! `pipeline`. Everything in a [`FrameContext`] is read-only once built.

use std::path::Path;

use serde::Serialize;
use tactile_core::distortion::{apply_warp, detect_markers, DetectConfig, MarkerSet, WarpMap};
use tactile_core::fem::{
    assemble, compute_forces, displacement_field, CameraModel, CsrMatrix, DisplacementField, ForceField, HexMesh,
};
use tactile_core::frame::{Mask, SensorGeometry, TactileImage};
use tactile_core::io::{read_image, Grid};
use tactile_core::markers::{track, MotionField};
use tactile_core::photostereo::{reconstruct, CalibrationTable, LookupDiagnostics, Reconstruction};
use tactile_core::poisson::PoissonSolver;
use tactile_core::slip::{detect_slip, ContactState, RigidTransform2D, SlipReport};

use crate::config::Config;
use crate::error::{CliError, Result};

pub fn load_image(path: &Path) -> Result<TactileImage> {
    if !path.is_file() {
        return Err(CliError::input(path, "no such file"));
    }
    Ok(read_image(path)?)
}

pub fn load_table(path: &Path) -> Result<CalibrationTable> {
    if !path.is_file() {
        return Err(CliError::input(path, "no such file"));
    }
    Ok(CalibrationTable::load(path)?)
}

pub fn load_warp(path: &Path) -> Result<WarpMap> {
    if !path.is_file() {
        return Err(CliError::input(path, "no such file"));
    }
    Ok(WarpMap::from_grid(Grid::read(path)?)?)
}

/// Checks that an input frame has the configured dimensions.
pub fn check_dims(img: &TactileImage, cfg: &Config, what: &str) -> Result<()> {
    let expect = (cfg.sensor.width, cfg.sensor.height);
    if img.dims() != expect {
        return Err(CliError::Input(format!(
            "{what} is {}x{}, configured sensor is {}x{}",
            img.width(),
            img.height(),
            expect.0,
            expect.1
        )));
    }
    Ok(())
}

/// Union of discs of `radius` px around every marker of both sets.
pub fn marker_mask(width: usize, height: usize, sets: &[&MarkerSet], radius: f64) -> Mask {
    let mut mask = Mask::empty(width, height);
    let r = radius.max(0.0);
    for set in sets {
        for m in &set.markers {
            let (x0, x1) = ((m.x - r).floor().max(0.0) as usize, ((m.x + r).ceil().max(0.0) as usize).min(width - 1));
            let (y0, y1) = ((m.y - r).floor().max(0.0) as usize, ((m.y + r).ceil().max(0.0) as usize).min(height - 1));
            for y in y0..=y1 {
                for x in x0..=x1 {
                    if (x as f64 - m.x).hypot(y as f64 - m.y) <= r {
                        mask.set(x, y, true);
                    }
                }
            }
        }
    }
    mask
}

pub struct FemContext {
    pub mesh: HexMesh,
    pub stiffness: CsrMatrix,
    pub camera: CameraModel,
}

impl FemContext {
    pub fn build(cfg: &Config) -> Result<Self> {
        let geometry = cfg.geometry();
        let mesh = HexMesh::for_sensor(cfg.fem.mesh[0], cfg.fem.mesh[1], &geometry)?;
        let stiffness = assemble(&mesh, &cfg.fem.material)?;
        let camera = CameraModel::centered(cfg.sensor.width, cfg.sensor.height, cfg.fem.camera_distance_mm, &geometry);
        Ok(Self { mesh, stiffness, camera })
    }
}

pub struct FrameContext {
    pub geometry: SensorGeometry,
    pub warp: Option<WarpMap>,
    /// Undistorted reference frame.
    pub reference: TactileImage,
    pub reference_markers: Option<MarkerSet>,
    pub table: CalibrationTable,
    pub solver: PoissonSolver,
    pub detect: DetectConfig,
    pub fill_radius_px: f64,
    pub max_displacement_px: f64,
    pub slip: tactile_core::slip::SlipConfig,
    pub fem: Option<FemContext>,
}

/// Everything computed for one frame.
pub struct FrameResult {
    pub image: TactileImage,
    pub markers: Option<MarkerSet>,
    pub reconstruction: Reconstruction,
    pub motion: Option<MotionField>,
    pub slip: Option<SlipReport>,
    pub displacement: Option<DisplacementField>,
    pub forces: Option<ForceField>,
}

/// Which stages [`FrameContext::process`] runs after depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stages {
    Depth,
    Slip,
    Full,
}

impl FrameContext {
    /// `markers_required` makes a reference without detectable markers an
    /// input error; otherwise the marker stages are simply skipped.
    pub fn build(
        cfg: &Config,
        reference: TactileImage,
        table: CalibrationTable,
        warp: Option<WarpMap>,
        stages: Stages,
    ) -> Result<Self> {
        check_dims(&reference, cfg, "reference frame")?;
        if let Some(w) = &warp {
            if (w.width(), w.height()) != reference.dims() {
                return Err(CliError::Input(format!(
                    "warp map is {}x{}, frames are {}x{}",
                    w.width(),
                    w.height(),
                    reference.width(),
                    reference.height()
                )));
            }
        }
        let q = table.quantization();
        log::debug!("table: B = {}, coverage {:.3}", q.bins, table.metadata().coverage);
        let reference = match &warp {
            Some(w) => apply_warp(&reference, w)?,
            None => reference,
        };
        let reference_markers = match detect_markers(&reference, &cfg.detection) {
            Ok(m) => Some(m),
            Err(e) if stages == Stages::Depth => {
                log::warn!("no markers in reference ({e}); lookup runs without marker fill");
                None
            }
            Err(e) => return Err(CliError::Input(format!("reference frame: {e}"))),
        };
        let fem = if stages == Stages::Full { Some(FemContext::build(cfg)?) } else { None };
        Ok(Self {
            geometry: cfg.geometry(),
            warp,
            solver: PoissonSolver::new(reference.width(), reference.height())?,
            reference,
            reference_markers,
            table,
            detect: cfg.detection.clone(),
            fill_radius_px: cfg.tracking.fill_radius_px,
            max_displacement_px: cfg.tracking.max_displacement_px,
            slip: cfg.slip,
            fem,
        })
    }

    pub fn undistort(&self, img: TactileImage) -> Result<TactileImage> {
        img.ensure_same_dims(&self.reference)?;
        Ok(match &self.warp {
            Some(w) => apply_warp(&img, w)?,
            None => img,
        })
    }

    /// Runs the requested stages on a raw (still distorted) frame.
    pub fn process(&self, raw: TactileImage, stages: Stages) -> Result<FrameResult> {
        let image = self.undistort(raw)?;
        let markers = match &self.reference_markers {
            None => None,
            Some(_) => match detect_markers(&image, &self.detect) {
                Ok(m) => Some(m),
                Err(e) if stages == Stages::Depth => {
                    log::warn!("no markers in frame ({e}); lookup runs without marker fill");
                    None
                }
                Err(e) => return Err(CliError::Input(format!("frame: {e}"))),
            },
        };
        let fill = match (&self.reference_markers, &markers) {
            (Some(a), Some(b)) => Some(marker_mask(image.width(), image.height(), &[a, b], self.fill_radius_px)),
            _ => None,
        };
        let reconstruction = reconstruct(
            &image,
            &self.reference,
            &self.table,
            &self.solver,
            self.geometry.pixel_pitch,
            fill.as_ref(),
        )?;
        let mut out = FrameResult {
            image,
            markers,
            reconstruction,
            motion: None,
            slip: None,
            displacement: None,
            forces: None,
        };
        if stages == Stages::Depth {
            return Ok(out);
        }
        let (Some(r), Some(c)) = (&self.reference_markers, &out.markers) else {
            unreachable!("marker stages require markers");
        };
        let motion = track(r, c, self.max_displacement_px)?;
        out.slip = Some(detect_slip(&motion, &out.reconstruction.depth, &self.slip));
        if let (Stages::Full, Some(fem)) = (stages, &self.fem) {
            let u = displacement_field(&motion, &out.reconstruction.depth, &fem.mesh, &self.geometry, &fem.camera);
            out.forces = Some(compute_forces(&fem.stiffness, &u, &fem.mesh)?);
            out.displacement = Some(u);
        }
        out.motion = Some(motion);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthSummary {
    /// mm.
    pub max: f64,
    /// px.
    pub argmax: [usize; 2],
    /// Mean depth over the contact region, mm; 0 without contact.
    pub mean_in_contact: f64,
    pub contact_area_px: usize,
    pub clamped_fraction: f64,
    pub lookup: LookupDiagnostics,
}

impl DepthSummary {
    pub fn new(r: &Reconstruction, depth_threshold: f64) -> Self {
        let d = &r.depth;
        let (x, y) = d.argmax();
        let (mut sum, mut n) = (0.0, 0usize);
        for &v in d.values() {
            if v > depth_threshold {
                sum += v;
                n += 1;
            }
        }
        Self {
            max: d.max(),
            argmax: [x, y],
            mean_in_contact: if n > 0 { sum / n as f64 } else { 0.0 },
            contact_area_px: n,
            clamped_fraction: r.clamped_fraction,
            lookup: r.lookup,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlipSummary {
    pub state: ContactState,
    pub score: f64,
    pub contact_markers: usize,
    pub flagged: Vec<usize>,
    pub max_deviation_px: f64,
    pub transform: Option<RigidTransform2D>,
}

impl SlipSummary {
    pub fn new(r: &SlipReport) -> Self {
        Self {
            state: r.state,
            score: r.score,
            contact_markers: r.markers.len(),
            flagged: r.flagged().map(|m| m.ref_index).collect(),
            max_deviation_px: r.markers.iter().map(|m| m.deviation).fold(0.0, f64::max),
            transform: r.transform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkerSummary {
    pub detected: usize,
    pub matched: usize,
    pub unmatched_reference: usize,
    pub unmatched_current: usize,
}

impl MarkerSummary {
    pub fn new(detected: &MarkerSet, motion: &MotionField) -> Self {
        Self {
            detected: detected.len(),
            matched: motion.len(),
            unmatched_reference: motion.unmatched_ref.len(),
            unmatched_current: motion.unmatched_cur.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForceSummary {
    /// Sum over top-surface nodes, N.
    pub total: [f64; 3],
    /// Largest top-node normal force magnitude, N.
    pub max_normal: f64,
    /// Largest top-node tangential force magnitude, N.
    pub max_tangential: f64,
    pub extrapolated_nodes: usize,
    pub mesh: [usize; 2],
}

impl ForceSummary {
    pub fn new(f: &ForceField, u: &DisplacementField, mesh: &HexMesh) -> Self {
        Self {
            total: f.top_total(),
            max_normal: f.top.iter().map(|n| n.fz.abs()).fold(0.0, f64::max),
            max_tangential: f.top.iter().map(|n| n.fx.hypot(n.fy)).fold(0.0, f64::max),
            extrapolated_nodes: mesh.top.iter().filter(|&&t| u.extrapolated[t]).count(),
            mesh: [mesh.nx, mesh.ny],
        }
    }
}
