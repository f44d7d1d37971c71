//! File formats: PNG / portable pixmap frames, the binary grid container for
//! per-pixel fields, and CSV dumps for inspection.
//!
//! Grid container layout (little endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic  b"TACGRID1"
//! 8       4     width  (u32)
//! 12      4     height (u32)
//! 16      4     channels per element (u32)
//! 20      1     element type: 1 = f32, 2 = f64
//! 21      3     reserved, zero
//! 24      ...   row-major data, channels interleaved
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::{ImageBuffer, ImageFormat, Rgb};
use thiserror::Error;

use crate::frame::{DepthMap, FrameError, GradientField, TactileImage};

pub const GRID_MAGIC: &[u8; 8] = b"TACGRID1";
const HEADER_LEN: usize = 24;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("image codec error on {path}: {source}")]
    Image {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("malformed grid file: {0}")]
    Format(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Loads a PNG or portable pixmap. 8-bit data is divided by 255, 16-bit by
/// 65535; grayscale inputs are replicated to three channels.
pub fn read_image(path: &Path) -> Result<TactileImage, IoError> {
    let img = image::open(path).map_err(|source| IoError::Image {
        path: path.display().to_string(),
        source,
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        image::DynamicImage::ImageRgb16(_)
        | image::DynamicImage::ImageRgba16(_)
        | image::DynamicImage::ImageLuma16(_)
        | image::DynamicImage::ImageLumaA16(_) => img
            .into_rgb16()
            .pixels()
            .map(|p| p.0.map(|c| c as f64 / 65535.0))
            .collect(),
        _ => img
            .into_rgb8()
            .pixels()
            .map(|p| p.0.map(|c| c as f64 / 255.0))
            .collect(),
    };
    Ok(TactileImage::new(w, h, data)?)
}

/// Writes a 16-bit RGB PNG, or a 16-bit binary pixmap when the extension is
/// `.ppm`/`.pnm`.
pub fn write_image(path: &Path, img: &TactileImage) -> Result<(), IoError> {
    let buf: ImageBuffer<Rgb<u16>, Vec<u16>> =
        ImageBuffer::from_fn(img.width() as u32, img.height() as u32, |x, y| {
            Rgb(img
                .get(x as usize, y as usize)
                .map(|c| (c.clamp(0.0, 1.0) * 65535.0).round() as u16))
        });
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("ppm") | Some("pnm") => ImageFormat::Pnm,
        _ => ImageFormat::Png,
    };
    buf.save_with_format(path, format).map_err(|source| IoError::Image {
        path: path.display().to_string(),
        source,
    })
}

/// Writes an 8-bit RGB PNG (plots and overlays).
pub fn write_rgb8(path: &Path, img: &image::RgbImage) -> Result<(), IoError> {
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|source| IoError::Image {
            path: path.display().to_string(),
            source,
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementType {
    F32 = 1,
    F64 = 2,
}

/// A dense multi-channel grid of scalars as stored in the container format.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }

    pub fn from_channels(width: usize, height: usize, planes: &[&[f64]]) -> Self {
        let channels = planes.len();
        let mut data = Vec::with_capacity(width * height * channels);
        for i in 0..width * height {
            for p in planes {
                data.push(p[i]);
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn encode(&self, elem: ElementType) -> Vec<u8> {
        let esize = if elem == ElementType::F32 { 4 } else { 8 };
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * esize);
        out.extend_from_slice(GRID_MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.channels as u32).to_le_bytes());
        out.push(elem as u8);
        out.extend_from_slice(&[0u8; 3]);
        for &v in &self.data {
            match elem {
                ElementType::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                ElementType::F64 => out.extend_from_slice(&v.to_le_bytes()),
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, IoError> {
        if bytes.len() < HEADER_LEN || &bytes[..8] != GRID_MAGIC {
            return Err(IoError::Format("bad magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let (width, height, channels) = (u32_at(8), u32_at(12), u32_at(16));
        let esize = match bytes[20] {
            1 => 4,
            2 => 8,
            t => return Err(IoError::Format(format!("unknown element type {t}"))),
        };
        let n = width
            .checked_mul(height)
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| IoError::Format("dimension overflow".into()))?;
        if width == 0 || height == 0 || channels == 0 {
            return Err(IoError::Format("zero dimension".into()));
        }
        let body = &bytes[HEADER_LEN..];
        if body.len() != n * esize {
            return Err(IoError::Format(format!(
                "expected {} data bytes, found {}",
                n * esize,
                body.len()
            )));
        }
        let data = body
            .chunks_exact(esize)
            .map(|c| {
                if esize == 4 {
                    f32::from_le_bytes(c.try_into().unwrap()) as f64
                } else {
                    f64::from_le_bytes(c.try_into().unwrap())
                }
            })
            .collect();
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn write(&self, path: &Path, elem: ElementType) -> Result<(), IoError> {
        let mut f = BufWriter::new(File::create(path).map_err(io_err(path))?);
        f.write_all(&self.encode(elem)).map_err(io_err(path))?;
        f.flush().map_err(io_err(path))
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path).map_err(io_err(path))?)
            .read_to_end(&mut bytes)
            .map_err(io_err(path))?;
        Self::decode(&bytes)
    }

    pub fn expect_channels(&self, channels: usize) -> Result<(), IoError> {
        if self.channels != channels {
            return Err(IoError::Format(format!(
                "expected {channels} channel(s), found {}",
                self.channels
            )));
        }
        Ok(())
    }
}

impl From<&DepthMap> for Grid {
    fn from(d: &DepthMap) -> Self {
        Grid::from_channels(d.width(), d.height(), &[d.values()])
    }
}

impl TryFrom<Grid> for DepthMap {
    type Error = IoError;

    fn try_from(g: Grid) -> Result<Self, IoError> {
        g.expect_channels(1)?;
        Ok(DepthMap::new(g.width, g.height, g.data)?)
    }
}

impl From<&GradientField> for Grid {
    fn from(g: &GradientField) -> Self {
        Grid::from_channels(g.width(), g.height(), &[g.p(), g.q()])
    }
}

impl TryFrom<Grid> for GradientField {
    type Error = IoError;

    fn try_from(g: Grid) -> Result<Self, IoError> {
        g.expect_channels(2)?;
        let (p, q) = (g.channel(0), g.channel(1));
        Ok(GradientField::new(g.width, g.height, p, q)?)
    }
}

/// Writes a grid as CSV rows `x,y,c0[,c1...]`.
pub fn write_grid_csv(path: &Path, grid: &Grid, names: &[&str]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["x".to_string(), "y".to_string()];
    header.extend((0..grid.channels).map(|c| names.get(c).map_or(format!("c{c}"), |s| s.to_string())));
    w.write_record(&header)?;
    for y in 0..grid.height {
        for x in 0..grid.width {
            let base = (y * grid.width + x) * grid.channels;
            let mut rec = vec![x.to_string(), y.to_string()];
            rec.extend(grid.data[base..base + grid.channels].iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| IoError::Io {
        path: path.display().to_string(),
        source: e,
    })
}
