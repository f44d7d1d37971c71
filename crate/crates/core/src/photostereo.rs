//! Photometric stereo by lookup table.
//!
//! The table is indexed by the quantized per-channel color difference
//! `image − reference` and stores the mean surface gradient observed in that
//! bin during calibration with a sphere of known radius. Empty bins resolve
//! to the nearest populated bin in color space, precomputed once per table.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::frame::{DepthMap, FrameError, GradientField, Mask, SensorGeometry, TactileImage};
use crate::poisson::{PoissonError, PoissonSolver};

pub const TABLE_MAGIC: &[u8; 8] = b"TACCAL01";
pub const TABLE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PhotostereoError {
    #[error("calibration needs at least one press")]
    NoPresses,
    #[error("press {index}: contact circle exceeds the {width}x{height} frame")]
    ContactOutOfBounds { index: usize, width: usize, height: usize },
    #[error("sphere radius must be positive, got {0} mm")]
    InvalidRadius(f64),
    #[error("press {index}: contact radius {radius_mm} mm is not below the sphere radius")]
    InvalidContact { index: usize, radius_mm: f64 },
    #[error("calibration table has no populated bins")]
    EmptyTable,
    #[error("invalid calibration settings: {0}")]
    InvalidConfig(String),
    #[error("malformed calibration table: {0}")]
    Format(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Poisson(#[from] PoissonError),
}

/// How color differences map to table bins: channel `k` splits
/// `[lo[k], hi[k]]` into `bins` equal levels; differences outside land in the
/// edge levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantization {
    /// Bins per channel `B`.
    pub bins: usize,
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Default for Quantization {
    fn default() -> Self {
        Self::symmetric(32, 0.5)
    }
}

impl Quantization {
    pub fn symmetric(bins: usize, range: f64) -> Self {
        Self {
            bins,
            lo: [-range; 3],
            hi: [range; 3],
        }
    }

    pub fn validate(&self) -> Result<(), PhotostereoError> {
        let ranges_ok = (0..3).all(|k| self.lo[k].is_finite() && self.hi[k].is_finite() && self.hi[k] > self.lo[k]);
        if !(2..=256).contains(&self.bins) || !ranges_ok {
            return Err(PhotostereoError::InvalidConfig(format!(
                "bins {} must lie in [2, 256] with lo < hi per channel",
                self.bins
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn level(&self, channel: usize, diff: f64) -> usize {
        let t = (diff - self.lo[channel]) / (self.hi[channel] - self.lo[channel]) * self.bins as f64;
        (t.floor().max(0.0) as usize).min(self.bins - 1)
    }

    #[inline]
    pub fn index(&self, cur: [f64; 3], reference: [f64; 3]) -> usize {
        let b = self.bins;
        let l = |k: usize| self.level(k, cur[k] - reference[k]);
        (l(0) * b + l(1)) * b + l(2)
    }

    pub fn levels_of(&self, index: usize) -> [usize; 3] {
        let b = self.bins;
        [index / (b * b), (index / b) % b, index % b]
    }

    pub fn len(&self) -> usize {
        self.bins.pow(3)
    }
}

/// Source of the quantization ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeMode {
    /// Per-channel extent of the calibration differences, widened by
    /// `margin` of its width on each side.
    Auto { margin: f64 },
    /// `[-r, r]` on every channel.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Bins per channel `B`.
    pub bins: usize,
    pub range: RangeMode,
    /// Pixels whose every channel differs from the reference by less than
    /// this are treated as untouched.
    pub no_contact_tolerance: f64,
    /// Gradient magnitude ceiling for samples and lookups.
    pub gradient_cap: f64,
    /// Pixels closer than this to the contact rim are not sampled, px.
    pub rim_margin_px: f64,
    /// Skip calibration pixels with any channel at 0 or 1.
    pub exclude_saturated: bool,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            bins: 32,
            range: RangeMode::Auto { margin: 0.02 },
            no_contact_tolerance: 0.01,
            gradient_cap: 3.0,
            rim_margin_px: 1.0,
            exclude_saturated: true,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<(), PhotostereoError> {
        let range_ok = match self.range {
            RangeMode::Auto { margin } => margin >= 0.0,
            RangeMode::Fixed(r) => r > 0.0,
        };
        if !(2..=256).contains(&self.bins) || !range_ok {
            return Err(PhotostereoError::InvalidConfig(format!(
                "bins {} must lie in [2, 256] with a positive range",
                self.bins
            )));
        }
        if !(self.no_contact_tolerance >= 0.0 && self.gradient_cap > 0.0 && self.rim_margin_px >= 0.0) {
            return Err(PhotostereoError::InvalidConfig(
                "tolerance and rim margin must be >= 0, gradient cap > 0".into(),
            ));
        }
        Ok(())
    }
}

/// One sphere press used for calibration.
#[derive(Debug, Clone)]
pub struct Press {
    pub image: TactileImage,
    /// px.
    pub center: [f64; 2],
    /// px.
    pub contact_radius_px: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Bin {
    pub p: f64,
    pub q: f64,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMetadata {
    pub version: u32,
    pub quantization: Quantization,
    pub no_contact_tolerance: f64,
    pub gradient_cap: f64,
    pub sphere_radius_mm: f64,
    /// SHA-256 of the reference frame, hex.
    pub reference_sha256: String,
    pub presses: usize,
    pub samples: u64,
    pub populated_bins: usize,
    /// Populated fraction of all `B³` bins.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTable {
    meta: TableMetadata,
    bins: Vec<Bin>,
    /// Per bin: index of the bin whose gradient it returns (itself when
    /// populated) and the color-space distance to it in bin units.
    resolve: Vec<(u32, f32)>,
}

/// SHA-256 over the little-endian `f64` samples and dimensions of a frame.
pub fn frame_hash(img: &TactileImage) -> String {
    let mut h = Sha256::new();
    h.update((img.width() as u64).to_le_bytes());
    h.update((img.height() as u64).to_le_bytes());
    for px in img.pixels() {
        for v in px {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn saturated(px: [f64; 3]) -> bool {
    px.iter().any(|&v| v <= 0.0 || v >= 1.0)
}

fn cap(p: f64, q: f64, limit: f64) -> (f64, f64) {
    let m = p.hypot(q);
    if m > limit {
        (p * limit / m, q * limit / m)
    } else {
        (p, q)
    }
}

/// Builds a table from sphere presses with analytic cap gradients.
pub fn calibrate(
    presses: &[Press],
    reference: &TactileImage,
    geometry: &SensorGeometry,
    sphere_radius: f64,
    cfg: &CalibrationConfig,
) -> Result<CalibrationTable, PhotostereoError> {
    cfg.validate()?;
    if presses.is_empty() {
        return Err(PhotostereoError::NoPresses);
    }
    if !(sphere_radius > 0.0) || !sphere_radius.is_finite() {
        return Err(PhotostereoError::InvalidRadius(sphere_radius));
    }
    let (w, h) = reference.dims();
    let pitch = geometry.pixel_pitch;
    // (difference, p, q) per sampled pixel
    let mut samples: Vec<([f64; 3], f64, f64)> = Vec::new();
    for (index, press) in presses.iter().enumerate() {
        press.image.ensure_same_dims(reference)?;
        let [cx, cy] = press.center;
        let r = press.contact_radius_px;
        if !(r > 0.0) || cx - r < 0.0 || cy - r < 0.0 || cx + r > (w - 1) as f64 || cy + r > (h - 1) as f64 {
            return Err(PhotostereoError::ContactOutOfBounds { index, width: w, height: h });
        }
        if r * pitch >= sphere_radius {
            return Err(PhotostereoError::InvalidContact {
                index,
                radius_mm: r * pitch,
            });
        }
        let inner = r - cfg.rim_margin_px;
        let (x0, x1) = ((cx - r).floor() as usize, (cx + r).ceil() as usize);
        let (y0, y1) = ((cy - r).floor() as usize, (cy + r).ceil() as usize);
        for y in y0..=y1.min(h - 1) {
            for x in x0..=x1.min(w - 1) {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                if dx.hypot(dy) >= inner {
                    continue;
                }
                let (c, rf) = (press.image.get(x, y), reference.get(x, y));
                if cfg.exclude_saturated && saturated(c) {
                    continue;
                }
                let diff = [c[0] - rf[0], c[1] - rf[1], c[2] - rf[2]];
                if diff.iter().all(|d| d.abs() < cfg.no_contact_tolerance) {
                    continue;
                }
                let (mx, my) = (dx * pitch, dy * pitch);
                let s = (sphere_radius * sphere_radius - mx * mx - my * my).sqrt();
                let (p, q) = cap(-mx / s, -my / s, cfg.gradient_cap);
                samples.push((diff, p, q));
            }
        }
    }
    if samples.is_empty() {
        return Err(PhotostereoError::EmptyTable);
    }

    let quant = match cfg.range {
        RangeMode::Fixed(r) => Quantization::symmetric(cfg.bins, r),
        RangeMode::Auto { margin } => {
            let (mut lo, mut hi) = ([f64::INFINITY; 3], [f64::NEG_INFINITY; 3]);
            for (d, _, _) in &samples {
                for k in 0..3 {
                    lo[k] = lo[k].min(d[k]);
                    hi[k] = hi[k].max(d[k]);
                }
            }
            for k in 0..3 {
                let pad = (hi[k] - lo[k]).max(cfg.no_contact_tolerance) * margin;
                lo[k] = lo[k].min(0.0) - pad;
                hi[k] = hi[k].max(0.0) + pad;
                if hi[k] - lo[k] < 1e-9 {
                    lo[k] -= cfg.no_contact_tolerance;
                    hi[k] += cfg.no_contact_tolerance;
                }
            }
            Quantization { bins: cfg.bins, lo, hi }
        }
    };
    let mut sums = vec![(0.0f64, 0.0f64, 0u32); quant.len()];
    let zero = [0.0; 3];
    for (d, p, q) in &samples {
        let b = &mut sums[quant.index(*d, zero)];
        b.0 += p;
        b.1 += q;
        b.2 += 1;
    }
    let bins: Vec<Bin> = sums
        .into_iter()
        .map(|(p, q, count)| {
            if count == 0 {
                Bin::default()
            } else {
                Bin {
                    p: p / count as f64,
                    q: q / count as f64,
                    count,
                }
            }
        })
        .collect();
    let populated = bins.iter().filter(|b| b.count > 0).count();
    let meta = TableMetadata {
        version: TABLE_VERSION,
        quantization: quant,
        no_contact_tolerance: cfg.no_contact_tolerance,
        gradient_cap: cfg.gradient_cap,
        sphere_radius_mm: sphere_radius,
        reference_sha256: frame_hash(reference),
        presses: presses.len(),
        samples: samples.len() as u64,
        populated_bins: populated,
        coverage: populated as f64 / quant.len() as f64,
    };
    CalibrationTable::from_parts(meta, bins)
}

impl CalibrationTable {
    /// Validates the bins and precomputes the empty-bin fallback.
    pub fn from_parts(mut meta: TableMetadata, bins: Vec<Bin>) -> Result<Self, PhotostereoError> {
        meta.quantization.validate()?;
        if bins.len() != meta.quantization.len() {
            return Err(PhotostereoError::Format(format!(
                "expected {} bins, found {}",
                meta.quantization.len(),
                bins.len()
            )));
        }
        if bins.iter().any(|b| b.count > 0 && !(b.p.is_finite() && b.q.is_finite())) {
            return Err(PhotostereoError::Format("populated bin with non-finite gradient".into()));
        }
        let quant = meta.quantization;
        let populated: Vec<(usize, [usize; 3])> = bins
            .iter()
            .enumerate()
            .filter(|(_, b)| b.count > 0)
            .map(|(i, _)| (i, quant.levels_of(i)))
            .collect();
        if populated.is_empty() {
            return Err(PhotostereoError::EmptyTable);
        }
        meta.populated_bins = populated.len();
        meta.coverage = populated.len() as f64 / quant.len() as f64;
        let resolve = (0..bins.len())
            .into_par_iter()
            .map(|i| {
                if bins[i].count > 0 {
                    return (i as u32, 0.0);
                }
                let l = quant.levels_of(i);
                let mut best = (usize::MAX, u64::MAX);
                for &(j, m) in &populated {
                    let d2: u64 = (0..3).map(|k| (l[k] as i64 - m[k] as i64).pow(2) as u64).sum();
                    if d2 < best.1 {
                        best = (j, d2);
                    }
                }
                (best.0 as u32, (best.1 as f64).sqrt() as f32)
            })
            .collect();
        Ok(Self { meta, bins, resolve })
    }

    pub fn metadata(&self) -> &TableMetadata {
        &self.meta
    }

    pub fn quantization(&self) -> Quantization {
        self.meta.quantization
    }

    pub fn bins(&self) -> &[Bin] {
        &self.bins
    }

    pub fn bin(&self, index: usize) -> Bin {
        self.bins[index]
    }

    /// Gradient returned for a bin and its fallback distance (0 when populated).
    pub fn resolve(&self, index: usize) -> (f64, f64, f64) {
        let (j, d) = self.resolve[index];
        let b = self.bins[j as usize];
        (b.p, b.q, d as f64)
    }

    pub fn matches_reference(&self, reference: &TactileImage) -> bool {
        frame_hash(reference) == self.meta.reference_sha256
    }

    pub fn encode(&self) -> Vec<u8> {
        let m = &self.meta;
        let mut out = Vec::with_capacity(64 + self.bins.len() * 20);
        out.extend_from_slice(TABLE_MAGIC);
        out.extend_from_slice(&TABLE_VERSION.to_le_bytes());
        out.extend_from_slice(&(m.quantization.bins as u32).to_le_bytes());
        for v in m.quantization.lo.iter().chain(&m.quantization.hi) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in [m.no_contact_tolerance, m.gradient_cap, m.sphere_radius_mm] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(m.presses as u64).to_le_bytes());
        out.extend_from_slice(&m.samples.to_le_bytes());
        let hash = hex::decode(&m.reference_sha256).unwrap_or_else(|_| vec![0; 32]);
        let mut fixed = [0u8; 32];
        fixed[..hash.len().min(32)].copy_from_slice(&hash[..hash.len().min(32)]);
        out.extend_from_slice(&fixed);
        for b in &self.bins {
            out.extend_from_slice(&b.p.to_le_bytes());
            out.extend_from_slice(&b.q.to_le_bytes());
            out.extend_from_slice(&b.count.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, PhotostereoError> {
        let bad = |m: &str| PhotostereoError::Format(m.to_string());
        const HEADER: usize = 8 + 4 + 4 + 48 + 24 + 16 + 32;
        if bytes.len() < HEADER || &bytes[..8] != TABLE_MAGIC {
            return Err(bad("missing magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != TABLE_VERSION {
            return Err(PhotostereoError::Format(format!("unsupported version {version}")));
        }
        let b = u32_at(12) as usize;
        let quantization = Quantization {
            bins: b,
            lo: [f64_at(16), f64_at(24), f64_at(32)],
            hi: [f64_at(40), f64_at(48), f64_at(56)],
        };
        quantization.validate()?;
        let n = quantization.len();
        if bytes.len() != HEADER + n * 20 {
            return Err(bad("bin array length mismatch"));
        }
        let bins = (0..n)
            .map(|i| {
                let o = HEADER + i * 20;
                Bin {
                    p: f64_at(o),
                    q: f64_at(o + 8),
                    count: u32_at(o + 16),
                }
            })
            .collect();
        let meta = TableMetadata {
            version,
            quantization,
            no_contact_tolerance: f64_at(64),
            gradient_cap: f64_at(72),
            sphere_radius_mm: f64_at(80),
            presses: u64_at(88) as usize,
            samples: u64_at(96),
            reference_sha256: hex::encode(&bytes[104..136]),
            populated_bins: 0,
            coverage: 0.0,
        };
        Self::from_parts(meta, bins)
    }

    /// Writes the binary table and a `.json` metadata sidecar next to it.
    pub fn save(&self, path: &Path) -> Result<(), PhotostereoError> {
        let io = |p: &Path| {
            let p = p.display().to_string();
            move |source| PhotostereoError::Io { path: p, source }
        };
        std::fs::write(path, self.encode()).map_err(io(path))?;
        let sidecar = path.with_extension("json");
        let json = serde_json::to_string_pretty(&self.meta).expect("metadata serializes");
        std::fs::write(&sidecar, json + "\n").map_err(io(&sidecar))
    }

    pub fn load(path: &Path) -> Result<Self, PhotostereoError> {
        let bytes = std::fs::read(path).map_err(|source| PhotostereoError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::decode(&bytes)
    }
}

/// Per-frame record of how far the lookup strayed from calibrated data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LookupDiagnostics {
    /// Pixels that went through the table (not short-circuited as untouched).
    pub active_pixels: usize,
    /// Active pixels answered by a fallback bin.
    pub fallback_fraction: f64,
    pub mean_fallback_distance: f64,
    pub max_fallback_distance: f64,
    /// Populated fraction of the distinct bins observed in this frame.
    pub observed_coverage: f64,
    /// Active pixels with a channel at 0 or 1.
    pub saturated_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct Lookup {
    pub gradients: GradientField,
    /// Color-space distance to the bin actually used, 0 for populated bins
    /// and untouched pixels.
    pub fallback_distance: Vec<f64>,
    pub diagnostics: LookupDiagnostics,
}

impl Lookup {
    pub fn is_fallback(&self, x: usize, y: usize) -> bool {
        self.fallback_distance[y * self.gradients.width() + x] > 0.0
    }
}

/// Gradient field for `image` by table lookup.
pub fn lookup_gradients(
    image: &TactileImage,
    reference: &TactileImage,
    table: &CalibrationTable,
) -> Result<Lookup, PhotostereoError> {
    image.ensure_same_dims(reference)?;
    let (w, h) = image.dims();
    let quant = table.quantization();
    let tol = table.meta.no_contact_tolerance;
    let limit = table.meta.gradient_cap;
    let n = w * h;
    let (mut p, mut q, mut dist) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    // Bin per pixel, `u32::MAX` when untouched.
    let mut bin = vec![u32::MAX; n];
    let (cur, refs) = (image.pixels(), reference.pixels());
    p.par_chunks_mut(w)
        .zip(q.par_chunks_mut(w))
        .zip(dist.par_chunks_mut(w))
        .zip(bin.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (((pr, qr), dr), br))| {
            let row = y * w..(y + 1) * w;
            for (x, (c, r)) in cur[row.clone()].iter().zip(&refs[row]).enumerate() {
                if (0..3).all(|k| (c[k] - r[k]).abs() < tol) {
                    continue;
                }
                let idx = quant.index(*c, *r);
                let (pp, qq, d) = table.resolve(idx);
                (pr[x], qr[x]) = cap(pp, qq, limit);
                dr[x] = d;
                br[x] = idx as u32;
            }
        });

    let (mut active, mut fallback, mut sat) = (0usize, 0usize, 0usize);
    let (mut sum_d, mut max_d) = (0.0f64, 0.0f64);
    let mut observed = vec![false; quant.len()];
    let (mut distinct, mut populated_observed) = (0usize, 0usize);
    for (i, &b) in bin.iter().enumerate() {
        if b == u32::MAX {
            continue;
        }
        let idx = b as usize;
        active += 1;
        if !observed[idx] {
            observed[idx] = true;
            distinct += 1;
            populated_observed += usize::from(table.bins[idx].count > 0);
        }
        let d = dist[i];
        if d > 0.0 {
            fallback += 1;
            sum_d += d;
            max_d = max_d.max(d);
        }
        sat += usize::from(saturated(cur[i]));
    }
    let frac = |n: usize| if active > 0 { n as f64 / active as f64 } else { 0.0 };
    Ok(Lookup {
        gradients: GradientField::new(w, h, p, q)?,
        fallback_distance: dist,
        diagnostics: LookupDiagnostics {
            active_pixels: active,
            fallback_fraction: frac(fallback),
            mean_fallback_distance: if fallback > 0 { sum_d / fallback as f64 } else { 0.0 },
            max_fallback_distance: max_d,
            observed_coverage: if distinct == 0 {
                1.0
            } else {
                populated_observed as f64 / distinct as f64
            },
            saturated_fraction: frac(sat),
        },
    })
}

/// Replaces gradients under `mask` with a smooth fill from the surrounding
/// pixels by repeated neighbour averaging. Unmasked pixels are untouched.
pub fn fill_masked(grad: &mut GradientField, mask: &Mask, iterations: usize) {
    let (w, h) = (grad.width(), grad.height());
    let targets: Vec<usize> = (0..w * h).filter(|&i| mask.bits()[i]).collect();
    if targets.is_empty() {
        return;
    }
    // Slot of each target pixel, `u32::MAX` elsewhere.
    let mut slot = vec![u32::MAX; w * h];
    for (k, &i) in targets.iter().enumerate() {
        slot[i] = k as u32;
    }
    // Per target: the fixed sum over unmasked neighbours, the slots of masked
    // neighbours and the reciprocal neighbour count.
    let mut fixed = Vec::with_capacity(targets.len());
    let mut links = Vec::with_capacity(targets.len());
    let mut inv = Vec::with_capacity(targets.len());
    let (p, q) = (grad.p(), grad.q());
    for &i in &targets {
        let (x, y) = (i % w, i / w);
        let (mut sp, mut sq, mut n) = (0.0, 0.0, 0.0);
        let mut nb = [u32::MAX; 4];
        for (k, (nx, ny)) in [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)]
            .into_iter()
            .enumerate()
        {
            if nx < w && ny < h {
                let j = ny * w + nx;
                n += 1.0;
                if slot[j] == u32::MAX {
                    sp += p[j];
                    sq += q[j];
                } else {
                    nb[k] = slot[j];
                }
            }
        }
        fixed.push((sp, sq));
        links.push(nb);
        inv.push(1.0 / n);
    }
    // Jacobi sweeps from zero: every target reads the previous sweep's values.
    let mut cur = vec![(0.0, 0.0); targets.len()];
    let mut next = cur.clone();
    for _ in 0..iterations {
        for (k, out) in next.iter_mut().enumerate() {
            let (mut sp, mut sq) = fixed[k];
            for &j in &links[k] {
                if j != u32::MAX {
                    let v: (f64, f64) = cur[j as usize];
                    sp += v.0;
                    sq += v.1;
                }
            }
            *out = (sp * inv[k], sq * inv[k]);
        }
        std::mem::swap(&mut cur, &mut next);
    }
    for (&(a, b), &i) in cur.iter().zip(&targets) {
        grad.p_mut()[i] = a;
        grad.q_mut()[i] = b;
    }
}

/// Depth from one frame: lookup, optional masked fill, Poisson integration.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub depth: DepthMap,
    pub gradients: GradientField,
    pub lookup: LookupDiagnostics,
    pub clamped_pixels: usize,
    pub clamped_fraction: f64,
}

pub fn reconstruct(
    image: &TactileImage,
    reference: &TactileImage,
    table: &CalibrationTable,
    solver: &PoissonSolver,
    pixel_pitch: f64,
    fill: Option<&Mask>,
) -> Result<Reconstruction, PhotostereoError> {
    let Lookup {
        mut gradients,
        diagnostics,
        ..
    } = lookup_gradients(image, reference, table)?;
    if let Some(mask) = fill {
        fill_masked(&mut gradients, mask, 40);
    }
    let integ = solver.integrate(&gradients, None, pixel_pitch)?;
    let n = integ.depth.values().len();
    Ok(Reconstruction {
        depth: integ.depth,
        gradients,
        lookup: diagnostics,
        clamped_pixels: integ.clamped,
        clamped_fraction: integ.clamped as f64 / n as f64,
    })
}
