//! Lens-distortion correction driven by the gel's marker grid.
//!
//! Dark dots are segmented with a locally adaptive threshold and reduced to
//! sub-pixel centroids. The detected centroids are associated to the nodes of
//! the known grid. The measured-minus-ideal correspondence is then
//! interpolated over every pixel with a thin-plate spline. The result is a
//! [`WarpMap`] that sends each corrected pixel to its source position in the
//! raw frame.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{FrameError, Mask, TactileImage};
use crate::io::{Grid, IoError};
use crate::morph;
use crate::tps::ThinPlateSpline;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistortionError {
    #[error("marker detection failed: found {found} marker(s), need {required}")]
    DetectionFailure { found: usize, required: usize },
    #[error("insufficient markers: {found} detected for a {rows}x{cols} grid")]
    InsufficientMarkers { found: usize, rows: usize, cols: usize },
    #[error("ambiguous marker-to-grid association: {0}")]
    AmbiguousAssociation(String),
    #[error("warp map is {0}x{1}, image is {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("invalid warp map: {0}")]
    InvalidWarp(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// A detected marker centroid (px) with its grid node once associated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<(usize, usize)>,
}

impl Marker {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y, grid: None }
    }

    pub fn pos(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MarkerSet {
    pub markers: Vec<Marker>,
}

impl MarkerSet {
    pub fn from_points(points: impl IntoIterator<Item = [f64; 2]>) -> Self {
        Self {
            markers: points.into_iter().map(|p| Marker::new(p[0], p[1])).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.markers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.markers.is_empty()
    }

    pub fn positions(&self) -> Vec<[f64; 2]> {
        self.markers.iter().map(Marker::pos).collect()
    }

    /// Checks bounds and pairwise separation.
    pub fn validate(&self, width: usize, height: usize, min_separation: f64) -> Result<(), String> {
        for (i, m) in self.markers.iter().enumerate() {
            if !(m.x >= 0.0 && m.y >= 0.0 && m.x <= (width - 1) as f64 && m.y <= (height - 1) as f64) {
                return Err(format!("marker {i} at ({:.2}, {:.2}) outside the image", m.x, m.y));
            }
            for (j, n) in self.markers.iter().enumerate().skip(i + 1) {
                if (m.x - n.x).hypot(m.y - n.y) < min_separation {
                    return Err(format!("markers {i} and {j} closer than {min_separation} px"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Markers darker than the surrounding gel.
    Dark,
    Bright,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    pub polarity: Polarity,
    /// Side of the box window used for the local mean, px (odd).
    pub window: usize,
    /// Relative contrast against the local mean required to mark a pixel.
    pub contrast: f64,
    pub min_area: usize,
    pub max_area: usize,
    /// Centroids closer than this are merged (the larger blob wins), px.
    pub min_separation: f64,
    /// Fewer detections than this is a detection failure.
    pub min_markers: usize,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            polarity: Polarity::Dark,
            window: 31,
            contrast: 0.2,
            min_area: 8,
            max_area: 2000,
            min_separation: 4.0,
            min_markers: 1,
        }
    }
}

/// Box-filtered mean with a square window, clipped at the frame border.
fn local_mean(values: &[f64], width: usize, height: usize, window: usize) -> Vec<f64> {
    let r = window / 2;
    let stride = width + 1;
    let mut integral = vec![0.0; stride * (height + 1)];
    for y in 0..height {
        let mut row = 0.0;
        for x in 0..width {
            row += values[y * width + x];
            integral[(y + 1) * stride + x + 1] = integral[y * stride + x + 1] + row;
        }
    }
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(height));
        for x in 0..width {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(width));
            let s = integral[y1 * stride + x1] - integral[y0 * stride + x1] - integral[y1 * stride + x0]
                + integral[y0 * stride + x0];
            out[y * width + x] = s / ((y1 - y0) * (x1 - x0)) as f64;
        }
    }
    out
}

struct Blob {
    x: f64,
    y: f64,
    area: usize,
}

/// Segments marker blobs and returns one sub-pixel centroid per blob.
///
/// The centroid weights are the local darkness `max(0, b - I)` over the blob
/// dilated by one pixel, where `b` is the mean of a surrounding ring. Partial
/// coverage at the blob rim therefore contributes proportionally.
pub fn detect_markers(image: &TactileImage, cfg: &DetectConfig) -> Result<MarkerSet, DistortionError> {
    let (w, h) = image.dims();
    let gray = image.luminance();
    let mean = local_mean(&gray, w, h, cfg.window.max(3) | 1);
    let bits: Vec<bool> = gray
        .iter()
        .zip(&mean)
        .map(|(&g, &m)| match cfg.polarity {
            Polarity::Dark => g < m * (1.0 - cfg.contrast),
            Polarity::Bright => g > m * (1.0 + cfg.contrast),
        })
        .collect();
    let mask = Mask::new(w, h, bits)?;
    let darkness = |v: f64, bg: f64| match cfg.polarity {
        Polarity::Dark => (bg - v).max(0.0),
        Polarity::Bright => (v - bg).max(0.0),
    };

    let mut blobs = Vec::new();
    for comp in morph::components(&mask) {
        let area = comp.pixels.len();
        if area < cfg.min_area || area > cfg.max_area {
            continue;
        }
        let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0, 0);
        for &i in &comp.pixels {
            let (x, y) = (i % w, i / w);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        // Blobs cut by the frame border have biased centroids.
        if x0 == 0 || y0 == 0 || x1 == w - 1 || y1 == h - 1 {
            continue;
        }
        // Blob membership over its bounding box.
        let bw = x1 - x0 + 1;
        let mut blob = vec![false; bw * (y1 - y0 + 1)];
        for &i in &comp.pixels {
            blob[(i / w - y0) * bw + i % w - x0] = true;
        }
        let inside = |x: usize, y: usize| (x0..=x1).contains(&x) && (y0..=y1).contains(&y) && blob[(y - y0) * bw + x - x0];
        let bx0 = x0.saturating_sub(3);
        let by0 = y0.saturating_sub(3);
        let bx1 = (x1 + 3).min(w - 1);
        let by1 = (y1 + 3).min(h - 1);
        let near = |x: usize, y: usize| {
            let xs = x.saturating_sub(1)..=(x + 1).min(w - 1);
            xs.clone()
                .any(|xx| (y.saturating_sub(1)..=(y + 1).min(h - 1)).any(|yy| inside(xx, yy)))
        };
        let (mut ring_sum, mut ring_n) = (0.0, 0usize);
        let mut support = Vec::new();
        for y in by0..=by1 {
            for x in bx0..=bx1 {
                if near(x, y) {
                    support.push((x, y));
                } else {
                    ring_sum += gray[y * w + x];
                    ring_n += 1;
                }
            }
        }
        let bg = if ring_n > 0 { ring_sum / ring_n as f64 } else { mean[comp.pixels[0]] };
        let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
        for (x, y) in support {
            let wt = darkness(gray[y * w + x], bg);
            sw += wt;
            sx += wt * x as f64;
            sy += wt * y as f64;
        }
        if sw <= 0.0 {
            continue;
        }
        blobs.push(Blob {
            x: sx / sw,
            y: sy / sw,
            area,
        });
    }

    // Merge near-duplicates, keeping the larger blob.
    blobs.sort_by(|a, b| b.area.cmp(&a.area));
    let mut kept: Vec<Blob> = Vec::new();
    for b in blobs {
        if kept.iter().all(|k| (k.x - b.x).hypot(k.y - b.y) >= cfg.min_separation) {
            kept.push(b);
        }
    }
    kept.sort_by(|a, b| a.y.total_cmp(&b.y).then(a.x.total_cmp(&b.x)));

    let required = cfg.min_markers.max(1);
    if kept.len() < required {
        return Err(DistortionError::DetectionFailure {
            found: kept.len(),
            required,
        });
    }
    Ok(MarkerSet::from_points(kept.into_iter().map(|b| [b.x, b.y])))
}

/// The physical marker grid as it would appear without distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    /// Node spacing in px on the corrected image.
    pub spacing_px: f64,
    /// Grid center in px; defaults to the image center.
    #[serde(default)]
    pub center: Option<[f64; 2]>,
}

impl GridSpec {
    pub const DEFAULT_ROWS: usize = 11;
    pub const DEFAULT_COLS: usize = 15;

    pub fn new(rows: usize, cols: usize, spacing_px: f64) -> Self {
        Self {
            rows,
            cols,
            spacing_px,
            center: None,
        }
    }

    /// Grid with spacing given in mm on a sensor of `pixel_pitch` mm/px.
    pub fn from_mm(rows: usize, cols: usize, spacing_mm: f64, pixel_pitch: f64) -> Self {
        Self::new(rows, cols, spacing_mm / pixel_pitch)
    }

    pub fn center_for(&self, width: usize, height: usize) -> [f64; 2] {
        self.center
            .unwrap_or([(width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0])
    }

    /// Ideal node position in the corrected frame.
    pub fn node(&self, row: usize, col: usize, width: usize, height: usize) -> [f64; 2] {
        let c = self.center_for(width, height);
        [
            c[0] + (col as f64 - (self.cols as f64 - 1.0) / 2.0) * self.spacing_px,
            c[1] + (row as f64 - (self.rows as f64 - 1.0) / 2.0) * self.spacing_px,
        ]
    }

    pub fn nodes(&self, width: usize, height: usize) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push(self.node(r, c, width, height));
            }
        }
        out
    }
}

/// Assigns each detected marker a `(row, col)` grid node.
///
/// Markers are sorted by y and cut into rows of `cols` markers, then sorted by
/// x inside each row. The frame is rejected when consecutive rows are not
/// separated by at least a fifth of the spacing, or neighbours inside a row
/// are closer than half the spacing.
pub fn associate(detected: &MarkerSet, grid: &GridSpec) -> Result<MarkerSet, DistortionError> {
    let expected = grid.rows * grid.cols;
    if detected.len() < expected {
        return Err(DistortionError::InsufficientMarkers {
            found: detected.len(),
            rows: grid.rows,
            cols: grid.cols,
        });
    }
    if detected.len() > expected {
        return Err(DistortionError::AmbiguousAssociation(format!(
            "{} markers for {} grid nodes",
            detected.len(),
            expected
        )));
    }
    let mut sorted = detected.markers.clone();
    sorted.sort_by(|a, b| a.y.total_cmp(&b.y));
    let mut out = Vec::with_capacity(expected);
    let mut prev_max_y = f64::NEG_INFINITY;
    for (r, chunk) in sorted.chunks_mut(grid.cols).enumerate() {
        let min_y = chunk.iter().map(|m| m.y).fold(f64::INFINITY, f64::min);
        if min_y - prev_max_y < 0.2 * grid.spacing_px {
            return Err(DistortionError::AmbiguousAssociation(format!(
                "rows {} and {} are not separated",
                r.saturating_sub(1),
                r
            )));
        }
        prev_max_y = chunk.iter().map(|m| m.y).fold(f64::NEG_INFINITY, f64::max);
        chunk.sort_by(|a, b| a.x.total_cmp(&b.x));
        for c in 0..chunk.len() {
            if c > 0 && chunk[c].x - chunk[c - 1].x < 0.5 * grid.spacing_px {
                return Err(DistortionError::AmbiguousAssociation(format!(
                    "markers at columns {} and {c} of row {r} overlap",
                    c - 1
                )));
            }
            out.push(Marker {
                x: chunk[c].x,
                y: chunk[c].y,
                grid: Some((r, c)),
            });
        }
    }
    Ok(MarkerSet { markers: out })
}

/// Interpolated correspondence field `corrected → distorted`.
#[derive(Debug, Clone)]
pub struct UndistortionModel {
    spline: ThinPlateSpline,
}

impl UndistortionModel {
    /// Source (distorted) position of a corrected-frame point.
    pub fn source(&self, x: f64, y: f64) -> [f64; 2] {
        let d = self.spline.eval(x, y);
        [x + d[0], y + d[1]]
    }

    pub fn to_warp_map(&self, width: usize, height: usize) -> WarpMap {
        let mut src = vec![[0.0; 2]; width * height];
        src.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
            for (x, s) in row.iter_mut().enumerate() {
                *s = self.source(x as f64, y as f64);
            }
        });
        WarpMap { width, height, src }
    }
}

/// Fits the correspondence between ideal grid nodes and detected markers.
pub fn fit_undistortion_model(
    detected: &MarkerSet,
    grid: &GridSpec,
    width: usize,
    height: usize,
) -> Result<UndistortionModel, DistortionError> {
    let assoc = associate(detected, grid)?;
    let mut ideal = Vec::with_capacity(assoc.len());
    let mut disp = Vec::with_capacity(assoc.len());
    for m in &assoc.markers {
        let (r, c) = m.grid.expect("associated");
        let n = grid.node(r, c, width, height);
        ideal.push(n);
        disp.push([m.x - n[0], m.y - n[1]]);
    }
    Ok(UndistortionModel {
        spline: ThinPlateSpline::fit(&ideal, &disp),
    })
}

/// Dense undistortion map for a `width x height` frame.
pub fn fit_undistortion(
    detected: &MarkerSet,
    grid: &GridSpec,
    width: usize,
    height: usize,
) -> Result<WarpMap, DistortionError> {
    Ok(fit_undistortion_model(detected, grid, width, height)?.to_warp_map(width, height))
}

/// Per-pixel source coordinates, corrected → distorted.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpMap {
    width: usize,
    height: usize,
    src: Vec<[f64; 2]>,
}

impl WarpMap {
    pub fn identity(width: usize, height: usize) -> Self {
        Self::from_fn(width, height, |x, y| [x, y])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        let mut src = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                src.push(f(x as f64, y as f64));
            }
        }
        Self { width, height, src }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn source(&self, x: usize, y: usize) -> [f64; 2] {
        self.src[y * self.width + x]
    }

    /// Largest distance between a pixel and its source.
    pub fn max_offset(&self) -> f64 {
        self.src
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let (x, y) = ((i % self.width) as f64, (i / self.width) as f64);
                (s[0] - x).hypot(s[1] - y)
            })
            .fold(0.0, f64::max)
    }

    /// Finite sources everywhere and a positive Jacobian determinant at
    /// interior samples every `step` pixels.
    pub fn validate(&self, step: usize) -> Result<(), DistortionError> {
        if let Some(i) = self.src.iter().position(|s| !s[0].is_finite() || !s[1].is_finite()) {
            return Err(DistortionError::InvalidWarp(format!(
                "non-finite source at ({}, {})",
                i % self.width,
                i / self.width
            )));
        }
        let step = step.max(1);
        for y in (1..self.height.saturating_sub(1)).step_by(step) {
            for x in (1..self.width.saturating_sub(1)).step_by(step) {
                let (l, r) = (self.source(x - 1, y), self.source(x + 1, y));
                let (u, d) = (self.source(x, y - 1), self.source(x, y + 1));
                let det = (r[0] - l[0]) * (d[1] - u[1]) - (r[1] - l[1]) * (d[0] - u[0]);
                if det <= 0.0 {
                    return Err(DistortionError::InvalidWarp(format!("fold at ({x}, {y})")));
                }
            }
        }
        Ok(())
    }

    pub fn to_grid(&self) -> Grid {
        let xs: Vec<f64> = self.src.iter().map(|s| s[0]).collect();
        let ys: Vec<f64> = self.src.iter().map(|s| s[1]).collect();
        Grid::from_channels(self.width, self.height, &[&xs, &ys])
    }

    pub fn from_grid(grid: Grid) -> Result<Self, IoError> {
        grid.expect_channels(2)?;
        let src = grid.data.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        Ok(Self {
            width: grid.width,
            height: grid.height,
            src,
        })
    }
}

/// Resamples `image` through `map` (bilinear); out-of-bounds sources are 0.
pub fn apply_warp(image: &TactileImage, map: &WarpMap) -> Result<TactileImage, DistortionError> {
    if image.dims() != (map.width, map.height) {
        return Err(DistortionError::DimensionMismatch(
            map.width,
            map.height,
            image.width(),
            image.height(),
        ));
    }
    let w = map.width;
    let mut data = vec![[0.0; 3]; w * map.height];
    data.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, px) in row.iter_mut().enumerate() {
            let s = map.src[y * w + x];
            *px = image.sample_bilinear(s[0], s[1]).unwrap_or([0.0; 3]);
        }
    });
    Ok(TactileImage::new(w, map.height, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_image(w: usize, h: usize, centers: &[[f64; 2]], radius: f64) -> TactileImage {
        TactileImage::from_fn(w, h, |x, y| {
            // 8x8 supersampled coverage
            let mut cov: f64 = 0.0;
            for c in centers {
                let mut hits = 0;
                for sy in 0..8 {
                    for sx in 0..8 {
                        let px = x as f64 - 0.5 + (sx as f64 + 0.5) / 8.0;
                        let py = y as f64 - 0.5 + (sy as f64 + 0.5) / 8.0;
                        if (px - c[0]).hypot(py - c[1]) <= radius {
                            hits += 1;
                        }
                    }
                }
                cov = cov.max(hits as f64 / 64.0);
            }
            [0.6 * (1.0 - 0.8 * cov); 3]
        })
    }

    #[test]
    fn blank_image_fails_detection() {
        let img = TactileImage::filled(64, 48, [0.5; 3]);
        assert_eq!(
            detect_markers(&img, &DetectConfig::default()).unwrap_err(),
            DistortionError::DetectionFailure { found: 0, required: 1 }
        );
    }

    #[test]
    fn single_disk_centroid() {
        let img = disk_image(64, 48, &[[30.3, 20.7]], 4.0);
        let set = detect_markers(&img, &DetectConfig::default()).unwrap();
        assert_eq!(set.len(), 1);
        let m = set.markers[0];
        assert!((m.x - 30.3).abs() < 0.05 && (m.y - 20.7).abs() < 0.05, "{m:?}");
    }

    #[test]
    fn detection_below_grid_size_fails() {
        let img = disk_image(64, 48, &[[30.0, 20.0]], 4.0);
        let cfg = DetectConfig {
            min_markers: 4,
            ..Default::default()
        };
        assert!(matches!(
            detect_markers(&img, &cfg),
            Err(DistortionError::DetectionFailure { found: 1, required: 4 })
        ));
    }

    #[test]
    fn ideal_grid_gives_identity_map() {
        let grid = GridSpec::new(5, 7, 10.0);
        let set = MarkerSet::from_points(grid.nodes(80, 60));
        let map = fit_undistortion(&set, &grid, 80, 60).unwrap();
        assert!(map.max_offset() < 1e-6);
    }

    #[test]
    fn translation_is_reproduced_everywhere() {
        let grid = GridSpec::new(5, 7, 10.0);
        let set = MarkerSet::from_points(grid.nodes(80, 60).into_iter().map(|p| [p[0] + 2.0, p[1] + 3.0]));
        let map = fit_undistortion(&set, &grid, 80, 60).unwrap();
        for y in 0..60 {
            for x in 0..80 {
                let s = map.source(x, y);
                assert!((s[0] - x as f64 - 2.0).abs() < 1e-6 && (s[1] - y as f64 - 3.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn association_errors() {
        let grid = GridSpec::new(3, 3, 10.0);
        let mut pts = grid.nodes(40, 40);
        pts.pop();
        assert!(matches!(
            associate(&MarkerSet::from_points(pts.clone()), &grid),
            Err(DistortionError::InsufficientMarkers { .. })
        ));
        // Two markers claiming the same node.
        pts.push([pts[0][0] + 1.0, pts[0][1]]);
        assert!(matches!(
            associate(&MarkerSet::from_points(pts), &grid),
            Err(DistortionError::AmbiguousAssociation(_))
        ));
    }

    #[test]
    fn identity_warp_is_bitwise_equal() {
        let img = TactileImage::from_fn(13, 9, |x, y| [(x * y) as f64 / 117.0, 0.1 * (x % 3) as f64, 0.77]);
        let out = apply_warp(&img, &WarpMap::identity(13, 9)).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn integer_translation_shifts_with_zero_fill() {
        let img = TactileImage::from_fn(10, 8, |x, y| [x as f64 / 10.0, y as f64 / 8.0, 0.5]);
        let map = WarpMap::from_fn(10, 8, |x, y| [x + 2.0, y - 1.0]);
        let out = apply_warp(&img, &map).unwrap();
        for y in 0..8 {
            for x in 0..10 {
                let expect = if x + 2 < 10 && y >= 1 { img.get(x + 2, y - 1) } else { [0.0; 3] };
                assert_eq!(out.get(x, y), expect);
            }
        }
    }

    #[test]
    fn warp_dimension_mismatch() {
        let img = TactileImage::filled(4, 4, [0.0; 3]);
        assert!(matches!(
            apply_warp(&img, &WarpMap::identity(5, 4)),
            Err(DistortionError::DimensionMismatch(..))
        ));
    }

    #[test]
    fn folded_map_fails_validation() {
        let map = WarpMap::from_fn(10, 10, |x, y| [9.0 - x, y]);
        assert!(map.validate(1).is_err());
        assert!(WarpMap::identity(10, 10).validate(1).is_ok());
    }
}
