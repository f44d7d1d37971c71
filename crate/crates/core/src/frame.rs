//! Frame-level domain types shared by every stage of the pipeline.
//!
//! Conventions:
//! - intensities are linear in `[0, 1]`; 8-bit data is divided by 255 on ingest
//! - pixel indices have their origin at the top-left corner
//! - physical-plane coordinates (mm) have x rightward, y downward and the
//!   origin at the image center

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default sensor frame size.
pub const DEFAULT_WIDTH: usize = 640;
pub const DEFAULT_HEIGHT: usize = 480;
/// Sensing field of the finger, mm².
pub const DEFAULT_SENSING_AREA_MM2: f64 = 675.0;
/// Undocumented for the cast elastomer; a configurable default.
pub const DEFAULT_GEL_THICKNESS_MM: f64 = 2.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("invalid dimensions {0}x{1}")]
    InvalidDimensions(usize, usize),
    #[error("buffer length {got} does not match {expected}")]
    BufferLength { expected: usize, got: usize },
    #[error("invalid sensor geometry: {0}")]
    InvalidGeometry(String),
}

/// A three-channel linear-intensity frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TactileImage {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl TactileImage {
    pub fn new(width: usize, height: usize, data: Vec<[f64; 3]>) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::InvalidDimensions(width, height));
        }
        if data.len() != width * height {
            return Err(FrameError::BufferLength {
                expected: width * height,
                got: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: [f64; 3]) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: [f64; 3]) {
        self.data[y * self.width + x] = v;
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.data
    }

    /// Mean of the three channels.
    pub fn luminance(&self) -> Vec<f64> {
        self.data.iter().map(|c| (c[0] + c[1] + c[2]) / 3.0).collect()
    }

    /// Bilinear sample at fractional pixel coordinates; `None` outside the
    /// pixel-center hull. Integer coordinates return the stored value exactly.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<[f64; 3]> {
        let (w, h) = (self.width as f64, self.height as f64);
        if !(x >= 0.0 && y >= 0.0 && x <= w - 1.0 && y <= h - 1.0) {
            return None;
        }
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let (a, b, c, d) = (self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1));
        let mut out = [0.0; 3];
        for k in 0..3 {
            out[k] = lerp(lerp(a[k], b[k], fx), lerp(c[k], d[k], fx), fy);
        }
        Some(out)
    }

    pub fn ensure_same_dims(&self, other: &TactileImage) -> Result<(), FrameError> {
        if self.dims() != other.dims() {
            return Err(FrameError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else {
        a + (b - a) * t
    }
}

/// Per-pixel signed difference `current - reference`, remapped so that zero
/// difference lands on 0.5 and the full range `[-1, 1]` covers `[0, 1]`.
pub fn difference_image(
    current: &TactileImage,
    reference: &TactileImage,
) -> Result<TactileImage, FrameError> {
    current.ensure_same_dims(reference)?;
    let data = current
        .data
        .iter()
        .zip(&reference.data)
        .map(|(c, r)| {
            let mut out = [0.0; 3];
            for k in 0..3 {
                out[k] = (0.5 + 0.5 * (c[k] - r[k])).clamp(0.0, 1.0);
            }
            out
        })
        .collect();
    Ok(TactileImage {
        width: current.width,
        height: current.height,
        data,
    })
}

/// Per-pixel indentation depth in mm (0 = undeformed).
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    z: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, z: Vec<f64>) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::InvalidDimensions(width, height));
        }
        if z.len() != width * height {
            return Err(FrameError::BufferLength {
                expected: width * height,
                got: z.len(),
            });
        }
        Ok(Self { width, height, z })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            z: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.z[y * self.width + x]
    }

    pub fn values(&self) -> &[f64] {
        &self.z
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.z
    }

    pub fn into_values(self) -> Vec<f64> {
        self.z
    }

    pub fn max(&self) -> f64 {
        self.z.iter().copied().fold(0.0, f64::max)
    }

    /// Pixel index of the maximum depth.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.z.iter().enumerate() {
            if v > self.z[best] {
                best = i;
            }
        }
        (best % self.width, best / self.width)
    }

    /// Bilinear sample with edge clamping.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        lerp(
            lerp(self.get(x0, y0), self.get(x1, y0), fx),
            lerp(self.get(x0, y1), self.get(x1, y1), fx),
            fy,
        )
    }
}

/// Surface gradients `p = dz/dx`, `q = dz/dy` (dimensionless).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    width: usize,
    height: usize,
    p: Vec<f64>,
    q: Vec<f64>,
}

impl GradientField {
    pub fn new(width: usize, height: usize, p: Vec<f64>, q: Vec<f64>) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::InvalidDimensions(width, height));
        }
        for v in [&p, &q] {
            if v.len() != width * height {
                return Err(FrameError::BufferLength {
                    expected: width * height,
                    got: v.len(),
                });
            }
        }
        Ok(Self { width, height, p, q })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            p: vec![0.0; width * height],
            q: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.p[i], self.q[i])
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, p: f64, q: f64) {
        let i = y * self.width + x;
        self.p[i] = p;
        self.q[i] = q;
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn p_mut(&mut self) -> &mut [f64] {
        &mut self.p
    }

    pub fn q_mut(&mut self) -> &mut [f64] {
        &mut self.q
    }

    /// `alpha * self + beta * other`.
    pub fn combine(&self, alpha: f64, other: &GradientField, beta: f64) -> GradientField {
        assert_eq!((self.width, self.height), (other.width, other.height));
        let p = self.p.iter().zip(&other.p).map(|(a, b)| alpha * a + beta * b).collect();
        let q = self.q.iter().zip(&other.q).map(|(a, b)| alpha * a + beta * b).collect();
        GradientField {
            width: self.width,
            height: self.height,
            p,
            q,
        }
    }
}

/// Binary pixel mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, FrameError> {
        if bits.len() != width * height {
            return Err(FrameError::BufferLength {
                expected: width * height,
                got: bits.len(),
            });
        }
        Ok(Self { width, height, bits })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    /// Membership test at a fractional position (nearest pixel); false outside.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (xi, yi) = (x.round(), y.round());
        if xi < 0.0 || yi < 0.0 || xi >= self.width as f64 || yi >= self.height as f64 {
            return false;
        }
        self.get(xi as usize, yi as usize)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Inclusive bounding box `(x0, y0, x1, y1)` of set pixels.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    bb = Some(match bb {
                        None => (x, y, x, y),
                        Some((a, b, c, d)) => (a.min(x), b.min(y), c.max(x), d.max(y)),
                    });
                }
            }
        }
        bb
    }
}

/// Physical scale of the sensing surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorGeometry {
    /// mm per pixel on the gel plane.
    pub pixel_pitch: f64,
    /// Elastomer thickness, mm.
    pub gel_thickness: f64,
    /// Sensing area extent `(width, height)`, mm.
    pub sensing_area: (f64, f64),
}

impl SensorGeometry {
    /// Geometry whose sensing area spans `width x height` pixels and covers
    /// `area_mm2` square millimetres.
    pub fn for_frame(width: usize, height: usize, area_mm2: f64, gel_thickness: f64) -> Self {
        let pitch = (area_mm2 / (width * height) as f64).sqrt();
        Self {
            pixel_pitch: pitch,
            gel_thickness,
            sensing_area: (width as f64 * pitch, height as f64 * pitch),
        }
    }

    pub fn validate(&self) -> Result<(), FrameError> {
        let (w, h) = self.sensing_area;
        if !(self.pixel_pitch > 0.0 && self.gel_thickness > 0.0 && w > 0.0 && h > 0.0) {
            return Err(FrameError::InvalidGeometry(
                "pixel pitch, gel thickness and sensing area must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Checks the sensing area against a frame of `width x height` pixels
    /// (relative tolerance 1e-6).
    pub fn validate_for(&self, width: usize, height: usize) -> Result<(), FrameError> {
        self.validate()?;
        let expected = width as f64 * height as f64 * self.pixel_pitch * self.pixel_pitch;
        let area = self.sensing_area.0 * self.sensing_area.1;
        if ((area - expected) / expected).abs() > 1e-6 {
            return Err(FrameError::InvalidGeometry(format!(
                "sensing area {area:.4} mm^2 inconsistent with {width}x{height} px at {:.5} mm/px",
                self.pixel_pitch
            )));
        }
        Ok(())
    }

    pub fn width_px(&self) -> usize {
        (self.sensing_area.0 / self.pixel_pitch).round() as usize
    }

    pub fn height_px(&self) -> usize {
        (self.sensing_area.1 / self.pixel_pitch).round() as usize
    }

    /// Pixel index → physical-plane mm (origin at the image center).
    pub fn px_to_mm(&self, x: f64, y: f64) -> (f64, f64) {
        let cx = (self.width_px() as f64 - 1.0) / 2.0;
        let cy = (self.height_px() as f64 - 1.0) / 2.0;
        ((x - cx) * self.pixel_pitch, (y - cy) * self.pixel_pitch)
    }

    pub fn mm_to_px(&self, x: f64, y: f64) -> (f64, f64) {
        let cx = (self.width_px() as f64 - 1.0) / 2.0;
        let cy = (self.height_px() as f64 - 1.0) / 2.0;
        (x / self.pixel_pitch + cx, y / self.pixel_pitch + cy)
    }
}

impl Default for SensorGeometry {
    fn default() -> Self {
        Self::for_frame(
            DEFAULT_WIDTH,
            DEFAULT_HEIGHT,
            DEFAULT_SENSING_AREA_MM2,
            DEFAULT_GEL_THICKNESS_MM,
        )
    }
}

/// First invariant violation found by [`Validate::validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub x: usize,
    pub y: usize,
    /// Channel or component index where applicable.
    pub channel: Option<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    NonFinite,
    OutOfRange,
    Negative,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?} value {} at ({}, {})", self.kind, self.value, self.x, self.y)?;
        if let Some(c) = self.channel {
            write!(f, " channel {c}")?;
        }
        Ok(())
    }
}

pub trait Validate {
    /// Returns the first violated invariant, scanning in row-major order.
    fn validate(&self) -> Result<(), Violation>;
}

impl Validate for TactileImage {
    fn validate(&self) -> Result<(), Violation> {
        for (i, px) in self.data.iter().enumerate() {
            for (c, &v) in px.iter().enumerate() {
                let kind = if !v.is_finite() {
                    ViolationKind::NonFinite
                } else if !(0.0..=1.0).contains(&v) {
                    ViolationKind::OutOfRange
                } else {
                    continue;
                };
                return Err(Violation {
                    kind,
                    x: i % self.width,
                    y: i / self.width,
                    channel: Some(c),
                    value: v,
                });
            }
        }
        Ok(())
    }
}

impl Validate for DepthMap {
    fn validate(&self) -> Result<(), Violation> {
        for (i, &v) in self.z.iter().enumerate() {
            let kind = if !v.is_finite() {
                ViolationKind::NonFinite
            } else if v < 0.0 {
                ViolationKind::Negative
            } else {
                continue;
            };
            return Err(Violation {
                kind,
                x: i % self.width,
                y: i / self.width,
                channel: None,
                value: v,
            });
        }
        Ok(())
    }
}

impl Validate for GradientField {
    fn validate(&self) -> Result<(), Violation> {
        for i in 0..self.p.len() {
            for (c, v) in [self.p[i], self.q[i]].into_iter().enumerate() {
                if !v.is_finite() {
                    return Err(Violation {
                        kind: ViolationKind::NonFinite,
                        x: i % self.width,
                        y: i / self.width,
                        channel: Some(c),
                        value: v,
                    });
                }
            }
        }
        Ok(())
    }
}
