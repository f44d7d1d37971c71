//! Raster plots: heatmaps, shaded relief and vector overlays.

use image::{Rgb, RgbImage};

use crate::frame::{DepthMap, TactileImage};

const VIRIDIS: [[f64; 3]; 9] = [
    [0.267, 0.005, 0.329],
    [0.283, 0.141, 0.458],
    [0.254, 0.265, 0.530],
    [0.207, 0.372, 0.553],
    [0.164, 0.471, 0.558],
    [0.128, 0.567, 0.551],
    [0.135, 0.659, 0.518],
    [0.267, 0.749, 0.441],
    [0.993, 0.906, 0.144],
];

/// Piecewise-linear viridis approximation; `t` is clamped to `[0, 1]`.
pub fn colormap(t: f64) -> Rgb<u8> {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let s = t * (VIRIDIS.len() - 1) as f64;
    let i = (s.floor() as usize).min(VIRIDIS.len() - 2);
    let f = s - i as f64;
    let c = |k: usize| VIRIDIS[i][k] + f * (VIRIDIS[i + 1][k] - VIRIDIS[i][k]);
    Rgb([to_u8(c(0)), to_u8(c(1)), to_u8(c(2))])
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Row-major grid rendered with each cell as a `scale x scale` block,
/// colored on `[lo, hi]`.
pub fn heatmap(values: &[f64], width: usize, height: usize, lo: f64, hi: f64, scale: u32) -> RgbImage {
    assert_eq!(values.len(), width * height);
    let span = if hi > lo { hi - lo } else { 1.0 };
    RgbImage::from_fn(width as u32 * scale, height as u32 * scale, |x, y| {
        let v = values[(y / scale) as usize * width + (x / scale) as usize];
        colormap((v - lo) / span)
    })
}

/// Same as [`heatmap`] with a solid color per cell.
pub fn color_grid(colors: &[[f64; 3]], width: usize, height: usize, scale: u32) -> RgbImage {
    assert_eq!(colors.len(), width * height);
    RgbImage::from_fn(width as u32 * scale, height as u32 * scale, |x, y| {
        let c = colors[(y / scale) as usize * width + (x / scale) as usize];
        Rgb(c.map(to_u8))
    })
}

/// Lambertian hill shading of a depth map lit from the upper left, tinted by
/// depth. `exaggeration` scales the height before shading.
pub fn hillshade(depth: &DepthMap, pixel_pitch: f64, exaggeration: f64) -> RgbImage {
    let (w, h) = (depth.width(), depth.height());
    let peak = depth.max().max(1e-12);
    let light = {
        let v = [-1.0f64, -1.0, 1.5];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / n, v[1] / n, v[2] / n]
    };
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        let z = |xx: usize, yy: usize| depth.get(xx, yy) * exaggeration;
        let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
        let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
        let p = (z(xr, y) - z(xl, y)) / (((xr - xl).max(1)) as f64 * pixel_pitch);
        let q = (z(x, yd) - z(x, yu)) / (((yd - yu).max(1)) as f64 * pixel_pitch);
        let norm = (p * p + q * q + 1.0).sqrt();
        let shade = ((-p * light[0] - q * light[1] + light[2]) / norm).max(0.0);
        let tint = colormap(depth.get(x, y) / peak);
        Rgb(tint.0.map(|c| to_u8(c as f64 / 255.0 * (0.25 + 0.75 * shade))))
    })
}

/// 8-bit copy of a linear frame.
pub fn frame_to_rgb8(img: &TactileImage) -> RgbImage {
    let (w, h) = img.dims();
    RgbImage::from_fn(w as u32, h as u32, |x, y| Rgb(img.get(x as usize, y as usize).map(to_u8)))
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

/// Bresenham segment, clipped to the image.
pub fn draw_line(img: &mut RgbImage, from: [f64; 2], to: [f64; 2], color: Rgb<u8>) {
    if !(from.iter().chain(&to).all(|v| v.is_finite())) {
        return;
    }
    let (mut x0, mut y0) = (from[0].round() as i64, from[1].round() as i64);
    let (x1, y1) = (to[0].round() as i64, to[1].round() as i64);
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let mut err = dx + dy;
    let limit = (img.width() + img.height()) as i64 * 4;
    for _ in 0..=(dx - dy).min(limit) {
        put(img, x0, y0, color);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// Segment with a two-stroke head at `to`.
pub fn draw_arrow(img: &mut RgbImage, from: [f64; 2], to: [f64; 2], color: Rgb<u8>) {
    draw_line(img, from, to, color);
    let (dx, dy) = (to[0] - from[0], to[1] - from[1]);
    let len = dx.hypot(dy);
    if len < 1e-9 {
        return;
    }
    let head = (0.3 * len).clamp(2.0, 8.0);
    let (ux, uy) = (dx / len, dy / len);
    for s in [-1.0, 1.0] {
        let (c, sn) = (0.5f64.cos(), s * 0.5f64.sin());
        let (bx, by) = (-(ux * c - uy * sn), -(ux * sn + uy * c));
        draw_line(img, to, [to[0] + head * bx, to[1] + head * by], color);
    }
}

/// Circle outline of radius `r` px.
pub fn draw_circle(img: &mut RgbImage, center: [f64; 2], r: f64, color: Rgb<u8>) {
    let steps = ((2.0 * std::f64::consts::PI * r).ceil() as usize * 2).max(8);
    for k in 0..steps {
        let t = k as f64 / steps as f64 * std::f64::consts::TAU;
        put(img, (center[0] + r * t.cos()).round() as i64, (center[1] + r * t.sin()).round() as i64, color);
    }
}

/// Filled disk of radius `r` px.
pub fn fill_circle(img: &mut RgbImage, center: [f64; 2], r: f64, color: Rgb<u8>) {
    let (x0, x1) = ((center[0] - r).floor() as i64, (center[0] + r).ceil() as i64);
    let (y0, y1) = ((center[1] - r).floor() as i64, (center[1] + r).ceil() as i64);
    for y in y0..=y1 {
        for x in x0..=x1 {
            if (x as f64 - center[0]).powi(2) + (y as f64 - center[1]).powi(2) <= r * r {
                put(img, x, y, color);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colormap_endpoints() {
        assert_eq!(colormap(0.0), Rgb([68, 1, 84]));
        assert_eq!(colormap(1.0), colormap(7.0));
        assert_eq!(colormap(f64::NAN), colormap(0.0));
    }

    #[test]
    fn heatmap_blocks() {
        let img = heatmap(&[0.0, 1.0], 2, 1, 0.0, 1.0, 3);
        assert_eq!(img.dimensions(), (6, 3));
        assert_eq!(img.get_pixel(0, 0), img.get_pixel(2, 2));
        assert_ne!(img.get_pixel(2, 0), img.get_pixel(3, 0));
    }

    #[test]
    fn line_hits_both_endpoints() {
        let mut img = RgbImage::new(20, 20);
        let red = Rgb([255, 0, 0]);
        draw_line(&mut img, [2.0, 3.0], [17.0, 11.0], red);
        assert_eq!(*img.get_pixel(2, 3), red);
        assert_eq!(*img.get_pixel(17, 11), red);
        // Far out-of-frame segments are clipped without panicking.
        draw_arrow(&mut img, [-1e6, 5.0], [1e6, 5.0], red);
        fill_circle(&mut img, [10.0, 10.0], 3.0, red);
        draw_circle(&mut img, [30.0, 30.0], 5.0, red);
    }
}
