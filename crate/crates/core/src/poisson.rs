//! Gradient-field integration by a fast Poisson solve.
//!
//! Solves the 5-point discrete `∇²z = ∂p/∂x + ∂q/∂y` with `z = 0` on the
//! image border. The divergence uses central differences. A type-I discrete
//! sine transform along rows diagonalizes the x part of the Dirichlet
//! Laplacian; each resulting column is then a tridiagonal system in y, solved
//! directly. Total cost is `O(N log N)`.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::frame::{DepthMap, GradientField, Mask};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoissonError {
    #[error("non-finite gradient at ({x}, {y})")]
    NonFinite { x: usize, y: usize },
    #[error("grid {0}x{1} too small, need at least 3x3")]
    TooSmall(usize, usize),
    #[error("solver built for {0}x{1}, got {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

/// Type-I DST of length `n` from one complex FFT of length `n + 1` per pair
/// of rows. Each row is folded into a real sequence whose DFT yields the even
/// sine coefficients directly and the odd ones by a running sum; two real
/// rows share one complex transform.
struct Dst1 {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    /// `sin(π j / (n + 1))` for `j = 0..=n`.
    sines: Vec<f64>,
}

impl Dst1 {
    fn new(n: usize, planner: &mut FftPlanner<f64>) -> Self {
        let big_n = n + 1;
        Self {
            n,
            fft: planner.plan_fft_forward(big_n),
            sines: (0..big_n)
                .map(|j| (std::f64::consts::PI * j as f64 / big_n as f64).sin())
                .collect(),
        }
    }

    fn fold(&self, x: &[f64], j: usize) -> f64 {
        if j == 0 {
            return 0.0;
        }
        let (a, b) = (x[j - 1], x[self.n - j]);
        self.sines[j] * (a + b) + 0.5 * (a - b)
    }

    /// Recovers `X_k` from `R_k + i I_k = Σ y_j e^{+2πijk/N}`, `k ≤ n / 2`.
    fn unfold(&self, spectrum: &[Complex<f64>], out: &mut [f64]) {
        let n = self.n;
        out[0] = 0.5 * spectrum[0].re;
        for k in 1..=n / 2 {
            let c = spectrum[k];
            out[2 * k - 1] = c.im;
            if 2 * k < n {
                out[2 * k] = out[2 * k - 2] + c.re;
            }
        }
    }

    /// Unnormalized `X_k = Σ_j x_j sin(π (j+1)(k+1) / (n+1))` of `a` and,
    /// when given, `b`, in place.
    fn apply_pair(&self, a: &mut [f64], b: Option<&mut [f64]>, work: &mut Work) {
        let big_n = self.n + 1;
        let Work { buf, scratch, ya, yb } = work;
        for j in 0..big_n {
            let im = b.as_deref().map_or(0.0, |b| self.fold(b, j));
            buf[j] = Complex::new(self.fold(a, j), im);
        }
        self.fft.process_with_scratch(buf, scratch);
        // Split the packed spectrum; conjugation turns the forward e^{-}
        // sums into the e^{+} sums `unfold` expects.
        for k in 0..=self.n / 2 {
            let z = buf[k];
            let m = buf[if k == 0 { 0 } else { big_n - k }].conj();
            ya[k] = ((z + m) * 0.5).conj();
            yb[k] = ((z - m) * Complex::new(0.0, -0.5)).conj();
        }
        self.unfold(ya, a);
        if let Some(b) = b {
            self.unfold(yb, b);
        }
    }

    fn work(&self) -> Work {
        let zero = Complex::new(0.0, 0.0);
        Work {
            buf: vec![zero; self.n + 1],
            scratch: vec![zero; self.fft.get_inplace_scratch_len()],
            ya: vec![zero; self.n / 2 + 1],
            yb: vec![zero; self.n / 2 + 1],
        }
    }

    /// Applies the transform to every contiguous row of length `n`.
    fn apply_rows(&self, data: &mut [f64]) {
        let n = self.n;
        data.par_chunks_mut(2 * n).for_each_init(
            || self.work(),
            |work, rows| {
                let (a, b) = rows.split_at_mut(n);
                let b = if b.is_empty() { None } else { Some(b) };
                self.apply_pair(a, b, work);
            },
        );
    }
}

struct Work {
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
    ya: Vec<Complex<f64>>,
    yb: Vec<Complex<f64>>,
}

/// Integrated depth together with clamping diagnostics.
#[derive(Debug, Clone)]
pub struct Integration {
    pub depth: DepthMap,
    /// Pixels raised to zero by the non-negativity clamp.
    pub clamped: usize,
}

/// Reusable solver for one frame size. Plans are built once and shared.
pub struct PoissonSolver {
    width: usize,
    height: usize,
    dst_x: Dst1,
    /// Row-major `(ny, nx)` reciprocal pivots of the forward elimination for
    /// the y systems `z[y-1] + (λₖ - 2) z[y] + z[y+1] = r[y]`, one column per
    /// x mode `k`. `|λₖ - 2| > 2`, so the elimination is stable.
    pivots: Vec<f64>,
}

impl std::fmt::Debug for PoissonSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PoissonSolver")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish()
    }
}

impl PoissonSolver {
    pub fn new(width: usize, height: usize) -> Result<Self, PoissonError> {
        if width < 3 || height < 3 {
            return Err(PoissonError::TooSmall(width, height));
        }
        let (nx, ny) = (width - 2, height - 2);
        let mut planner = FftPlanner::new();
        let dst_x = Dst1::new(nx, &mut planner);
        let mut pivots = vec![0.0; nx * ny];
        for k in 0..nx {
            let d = 2.0 * (std::f64::consts::PI * (k + 1) as f64 / (nx + 1) as f64).cos() - 4.0;
            let mut prev = 0.0;
            for y in 0..ny {
                let inv = 1.0 / (d - prev);
                pivots[y * nx + k] = inv;
                prev = inv;
            }
        }
        Ok(Self {
            width,
            height,
            dst_x,
            pivots,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn check(&self, grad: &GradientField) -> Result<(), PoissonError> {
        if (grad.width(), grad.height()) != (self.width, self.height) {
            return Err(PoissonError::DimensionMismatch(
                self.width,
                self.height,
                grad.width(),
                grad.height(),
            ));
        }
        for (i, (p, q)) in grad.p().iter().zip(grad.q()).enumerate() {
            if !p.is_finite() || !q.is_finite() {
                return Err(PoissonError::NonFinite {
                    x: i % self.width,
                    y: i / self.width,
                });
            }
        }
        Ok(())
    }

    /// Central-difference divergence on the full grid (border entries zero).
    /// Gradients outside `mask` are treated as zero.
    pub fn divergence(&self, grad: &GradientField, mask: Option<&Mask>) -> Vec<f64> {
        let (w, h) = (self.width, self.height);
        let keep = |i: usize| mask.is_none_or(|m| m.bits()[i]);
        let p = |i: usize| if keep(i) { grad.p()[i] } else { 0.0 };
        let q = |i: usize| if keep(i) { grad.q()[i] } else { 0.0 };
        let mut div = vec![0.0; w * h];
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let i = y * w + x;
                div[i] = 0.5 * (p(i + 1) - p(i - 1)) + 0.5 * (q(i + w) - q(i - w));
            }
        }
        div
    }

    /// Solves the Dirichlet problem `L z = rhs` for the interior of the grid;
    /// `rhs` is full-size and its border entries are ignored.
    pub fn solve_laplacian(&self, rhs: &[f64]) -> Vec<f64> {
        let (w, h) = (self.width, self.height);
        let (nx, ny) = (w - 2, h - 2);
        let mut interior = Vec::with_capacity(nx * ny);
        for y in 1..h - 1 {
            interior.extend_from_slice(&rhs[y * w + 1..y * w + w - 1]);
        }
        self.dst_x.apply_rows(&mut interior);
        self.solve_columns(&mut interior);
        self.dst_x.apply_rows(&mut interior);
        // DST-I is its own inverse up to 2/(n+1).
        let norm = 2.0 / (nx + 1) as f64;
        let sol = interior;
        let mut z = vec![0.0; w * h];
        for y in 1..h - 1 {
            for (o, v) in z[y * w + 1..y * w + w - 1].iter_mut().zip(&sol[(y - 1) * nx..y * nx]) {
                *o = v * norm;
            }
        }
        z
    }

    /// Thomas sweeps for every x mode at once, in place on the row-major
    /// `(ny, nx)` spectrum.
    fn solve_columns(&self, data: &mut [f64]) {
        let nx = self.width - 2;
        let ny = data.len() / nx;
        for (row, inv) in data[..nx].iter_mut().zip(&self.pivots[..nx]) {
            *row *= inv;
        }
        for y in 1..ny {
            let (done, rest) = data.split_at_mut(y * nx);
            let prev = &done[(y - 1) * nx..];
            let inv = &self.pivots[y * nx..(y + 1) * nx];
            for ((r, p), i) in rest[..nx].iter_mut().zip(prev).zip(inv) {
                *r = (*r - p) * i;
            }
        }
        for y in (0..ny - 1).rev() {
            let (head, tail) = data.split_at_mut((y + 1) * nx);
            let next = &tail[..nx];
            let inv = &self.pivots[y * nx..(y + 1) * nx];
            for ((r, n), i) in head[y * nx..].iter_mut().zip(next).zip(inv) {
                *r -= i * n;
            }
        }
    }

    /// Integrates without the non-negativity clamp; values in mm when the
    /// gradients are dimensionless and `pixel_pitch` is mm/px.
    pub fn integrate_unclamped(
        &self,
        grad: &GradientField,
        mask: Option<&Mask>,
        pixel_pitch: f64,
    ) -> Result<Vec<f64>, PoissonError> {
        self.check(grad)?;
        let mut div = self.divergence(grad, mask);
        for d in &mut div {
            *d *= pixel_pitch;
        }
        Ok(self.solve_laplacian(&div))
    }

    pub fn integrate(
        &self,
        grad: &GradientField,
        mask: Option<&Mask>,
        pixel_pitch: f64,
    ) -> Result<Integration, PoissonError> {
        let mut z = self.integrate_unclamped(grad, mask, pixel_pitch)?;
        let mut clamped = 0;
        for v in &mut z {
            if *v < 0.0 {
                *v = 0.0;
                clamped += 1;
            }
        }
        Ok(Integration {
            depth: DepthMap::new(self.width, self.height, z).expect("solver dims"),
            clamped,
        })
    }
}

/// One-shot convenience wrapper around [`PoissonSolver`].
pub fn poisson_integrate(
    grad: &GradientField,
    mask: Option<&Mask>,
    pixel_pitch: f64,
) -> Result<Integration, PoissonError> {
    PoissonSolver::new(grad.width(), grad.height())?.integrate(grad, mask, pixel_pitch)
}

/// 5-point Laplacian on the interior, zero on the border.
pub fn laplacian(z: &[f64], width: usize, height: usize) -> Vec<f64> {
    let mut out = vec![0.0; width * height];
    for y in 1..height - 1 {
        for x in 1..width - 1 {
            let i = y * width + x;
            out[i] = z[i - 1] + z[i + 1] + z[i - width] + z[i + width] - 4.0 * z[i];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Naive O(n²) DST-I used as an oracle for the FFT route.
    fn dst1_naive(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, v)| v * (PI * ((j + 1) * (k + 1)) as f64 / (n + 1) as f64).sin())
                    .sum()
            })
            .collect()
    }

    #[test]
    fn fft_dst_matches_naive_sum() {
        let mut planner = FftPlanner::new();
        for n in [1usize, 2, 5, 17, 64, 478, 479] {
            let d = Dst1::new(n, &mut planner);
            let x: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
            let x2: Vec<f64> = (0..n).map(|i| ((i * 5 + 1) % 13) as f64 - 6.0).collect();
            let mut work = d.work();
            let mut single = x.clone();
            d.apply_pair(&mut single, None, &mut work);
            let (mut a, mut b) = (x.clone(), x2.clone());
            d.apply_pair(&mut a, Some(&mut b), &mut work);
            let scale = n as f64 * 6.0;
            for (got, e) in single.iter().zip(dst1_naive(&x)) {
                assert!((got - e).abs() < 1e-12 * scale, "n={n}: {got} vs {e}");
            }
            for (got, e) in a.iter().zip(dst1_naive(&x)) {
                assert!((got - e).abs() < 1e-12 * scale, "n={n} paired: {got} vs {e}");
            }
            for (got, e) in b.iter().zip(dst1_naive(&x2)) {
                assert!((got - e).abs() < 1e-12 * scale, "n={n} second: {got} vs {e}");
            }
        }
    }

    #[test]
    fn zero_gradients_give_zero_depth() {
        let g = GradientField::zeros(16, 12);
        let out = poisson_integrate(&g, None, 1.0).unwrap();
        assert!(out.depth.values().iter().all(|&v| v == 0.0));
        assert_eq!(out.clamped, 0);
    }

    #[test]
    fn rejects_non_finite_and_tiny_grids() {
        let mut g = GradientField::zeros(8, 8);
        g.set(3, 4, f64::INFINITY, 0.0);
        assert_eq!(
            poisson_integrate(&g, None, 1.0).unwrap_err(),
            PoissonError::NonFinite { x: 3, y: 4 }
        );
        assert!(matches!(
            poisson_integrate(&GradientField::zeros(2, 8), None, 1.0),
            Err(PoissonError::TooSmall(2, 8))
        ));
    }

    #[test]
    fn mask_zeroes_outside_gradients() {
        let (w, h) = (20, 20);
        let p: Vec<f64> = (0..w * h).map(|i| ((i % 7) as f64 - 3.0) * 0.01).collect();
        let g = GradientField::new(w, h, p, vec![0.0; w * h]).unwrap();
        let empty = Mask::empty(w, h);
        let out = poisson_integrate(&g, Some(&empty), 1.0).unwrap();
        assert!(out.depth.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn clamp_counts_negative_pixels() {
        // A dimple (negative bump) integrates to negative values that get clamped.
        let (w, h) = (32, 32);
        let mut g = GradientField::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = (x as f64 - 15.5, y as f64 - 15.5);
                let s = -0.01 * (-(dx * dx + dy * dy) / 20.0).exp();
                g.set(x, y, -2.0 * dx / 20.0 * s, -2.0 * dy / 20.0 * s);
            }
        }
        let out = poisson_integrate(&g, None, 1.0).unwrap();
        assert!(out.clamped > 0);
        assert!(out.depth.values().iter().all(|&v| v >= 0.0));
    }
}
