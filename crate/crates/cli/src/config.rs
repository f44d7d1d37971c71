//! Run configuration: a TOML file whose sections are all optional.
//!
//! Relative paths inside the file resolve against the file's directory;
//! paths given on the command line resolve against the working directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tactile_core::distortion::{DetectConfig, GridSpec};
use tactile_core::fem::MaterialParams;
use tactile_core::frame::SensorGeometry;
use tactile_core::illum::{CostWeights, IllumParams, IllumSetup, OptBounds};
use tactile_core::photostereo::CalibrationConfig;
use tactile_core::simulator::{CalibrationSetSpec, IlluminationConfig, MarkerLayer};
use tactile_core::slip::SlipConfig;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub width: usize,
    pub height: usize,
    /// mm per px.
    pub pixel_pitch: f64,
    /// mm.
    pub gel_thickness: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        let g = SensorGeometry::default();
        Self {
            width: g.width_px(),
            height: g.height_px(),
            pixel_pitch: g.pixel_pitch,
            gel_thickness: g.gel_thickness,
        }
    }
}

impl SensorConfig {
    pub fn geometry(&self) -> SensorGeometry {
        SensorGeometry {
            pixel_pitch: self.pixel_pitch,
            gel_thickness: self.gel_thickness,
            sensing_area: (self.width as f64 * self.pixel_pitch, self.height as f64 * self.pixel_pitch),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub out: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub image: Option<PathBuf>,
    pub table: Option<PathBuf>,
    pub warp: Option<PathBuf>,
    pub frames: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

/// The printed dot grid, used both for rendering and for warp fitting.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarkerConfig {
    pub rows: usize,
    pub cols: usize,
    pub spacing_px: f64,
    pub radius_px: f64,
    pub absorptance: f64,
}

impl Default for MarkerConfig {
    fn default() -> Self {
        Self {
            rows: GridSpec::DEFAULT_ROWS,
            cols: GridSpec::DEFAULT_COLS,
            spacing_px: 36.0,
            radius_px: 4.0,
            absorptance: 0.8,
        }
    }
}

impl MarkerConfig {
    pub fn layer(&self) -> MarkerLayer {
        MarkerLayer {
            absorptance: self.absorptance,
            ..MarkerLayer::new(self.rows, self.cols, self.spacing_px, self.radius_px)
        }
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec::new(self.rows, self.cols, self.spacing_px)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub frames: usize,
    /// mm.
    pub sphere_radius: f64,
    /// Indentation depth, mm.
    pub depth: f64,
    /// Press center of frame 0 in px; the frame center when absent.
    pub center_px: Option<[f64; 2]>,
    /// Per-frame translation of the press and the marker layer together, px.
    pub step_px: [f64; 2],
    pub markers: bool,
    pub noise_sigma: f64,
    /// Division-model coefficient applied to every written image.
    pub distortion_k1: f64,
    /// Also write each frame's ground-truth depth grid.
    pub write_depth: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            frames: 1,
            sphere_radius: 3.0,
            depth: 1.0,
            center_px: None,
            step_px: [1.0, 0.5],
            markers: true,
            noise_sigma: 0.0,
            distortion_k1: 0.0,
            write_depth: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    /// Largest marker displacement accepted between reference and frame, px.
    pub max_displacement_px: f64,
    /// Radius of the marker discs excluded from the color lookup, px.
    pub fill_radius_px: f64,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            max_displacement_px: 15.0,
            fill_radius_px: 6.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FemConfig {
    /// Elements along x and y.
    pub mesh: [usize; 2],
    pub material: MaterialParams,
    /// Camera to gel distance, mm.
    pub camera_distance_mm: f64,
}

impl Default for FemConfig {
    fn default() -> Self {
        Self {
            mesh: [32, 24],
            material: MaterialParams::default(),
            camera_distance_mm: 20.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IllumOptConfig {
    pub budget: usize,
    pub bounds: OptBounds,
    pub weights: CostWeights,
    pub setup: IllumSetup,
    /// Starting point; the skewed configuration when absent.
    pub initial: Option<IllumParams>,
}

impl Default for IllumOptConfig {
    fn default() -> Self {
        Self {
            budget: 500,
            bounds: OptBounds::default(),
            weights: CostWeights::default(),
            setup: IllumSetup::default(),
            initial: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub sensor: SensorConfig,
    pub paths: PathsConfig,
    /// Lighting used by `render`; ideal directional lights when absent.
    pub illumination: Option<IlluminationConfig>,
    pub markers: MarkerConfig,
    pub detection: DetectConfig,
    pub render: RenderConfig,
    /// When present, `render` also writes a calibration press set.
    pub calibration_set: Option<CalibrationSetSpec>,
    pub calibration: CalibrationConfig,
    pub tracking: TrackingConfig,
    pub slip: SlipConfig,
    pub fem: FemConfig,
    pub illum_opt: IllumOptConfig,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent())
    }

    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.map(Path::to_path_buf);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.sensor.geometry()
    }

    pub fn illumination(&self) -> IlluminationConfig {
        self.illumination.clone().unwrap_or_else(IlluminationConfig::directional_ideal)
    }

    /// Checks every setting that can be checked without touching inputs.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.sensor.width < 3 || self.sensor.height < 3 {
            return bad(format!("frame {}x{} is too small", self.sensor.width, self.sensor.height));
        }
        let geometry = self.geometry();
        geometry.validate_for(self.sensor.width, self.sensor.height)?;
        let s = &self.slip;
        if !(s.depth_threshold > 0.0 && s.deviation_threshold > 0.0 && s.trigger_fraction > 0.0) {
            return bad(format!("slip thresholds must be positive: {s:?}"));
        }
        if s.trigger_fraction > 1.0 {
            return bad(format!("slip trigger fraction {} exceeds 1", s.trigger_fraction));
        }
        let t = &self.tracking;
        if !(t.max_displacement_px > 0.0 && t.fill_radius_px >= 0.0) {
            return bad(format!("tracking settings out of range: {t:?}"));
        }
        let m = &self.markers;
        if m.rows < 2 || m.cols < 2 || !(m.spacing_px > 0.0 && m.radius_px > 0.0) || !(0.0..=1.0).contains(&m.absorptance) {
            return bad(format!("marker grid out of range: {m:?}"));
        }
        let r = &self.render;
        if !(r.sphere_radius > 0.0 && r.depth >= 0.0 && r.depth <= r.sphere_radius) {
            return bad(format!("render indenter out of range: radius {} depth {}", r.sphere_radius, r.depth));
        }
        if !(r.noise_sigma >= 0.0 && r.distortion_k1.abs() < 0.5) {
            return bad(format!("render noise {} or k1 {} out of range", r.noise_sigma, r.distortion_k1));
        }
        if self.fem.mesh.contains(&0) || !(self.fem.camera_distance_mm > 0.0) {
            return bad(format!("fem mesh {:?} and camera distance must be positive", self.fem.mesh));
        }
        self.fem.material.validate()?;
        self.calibration.validate()?;
        self.illum_opt.bounds.validate()?;
        if let Some(ill) = &self.illumination {
            ill.validate()?;
        }
        Ok(())
    }

    /// Resolves a configured path against the config file's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// A path from the command line if given, else from `[paths]`.
    pub fn pick(&self, cli: Option<&PathBuf>, configured: &Option<PathBuf>) -> Option<PathBuf> {
        cli.cloned().or_else(|| configured.as_deref().map(|p| self.resolve(p)))
    }

    /// Like [`Config::pick`] but the path is required.
    pub fn require(&self, cli: Option<&PathBuf>, configured: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
        self.pick(cli, configured)
            .ok_or_else(|| CliError::Config(format!("no {what} given (flag or [paths] entry)")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = Config::parse("", None).unwrap();
        assert_eq!(c.sensor.width, 640);
        assert_eq!(c.fem.mesh, [32, 24]);
        assert_eq!(c.illum_opt.budget, 500);
    }

    #[test]
    fn unknown_keys_are_schema_violations() {
        let e = Config::parse("[slip]\nbogus = 1\n", None).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn thresholds_must_be_positive() {
        let e = Config::parse("[slip]\ndeviation_threshold = 0.0\n", None).unwrap_err();
        assert!(matches!(e, CliError::Config(_)));
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let c = Config::parse("[paths]\ntable = \"t.ctab\"\n", Some(Path::new("/data/run"))).unwrap();
        assert_eq!(c.pick(None, &c.paths.table).unwrap(), PathBuf::from("/data/run/t.ctab"));
        let cli = PathBuf::from("x.ctab");
        assert_eq!(c.pick(Some(&cli), &c.paths.table).unwrap(), cli);
    }
}
