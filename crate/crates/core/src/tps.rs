//! Thin-plate spline interpolation of 2-vector data scattered in the plane.
//!
//! `f(x) = a0 + a1·x + a2·y + Σ wᵢ U(‖x − cᵢ‖)` with `U(r) = r² ln r`, fitted
//! exactly through the control values. The affine part makes constant and
//! linear fields reproduce exactly.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct ThinPlateSpline {
    centers: Vec<[f64; 2]>,
    weights: Vec<[f64; 2]>,
    affine: [[f64; 3]; 2],
    // Coordinates are normalized before fitting for conditioning.
    origin: [f64; 2],
    scale: f64,
}

#[inline]
fn kernel(r2: f64) -> f64 {
    if r2 <= 0.0 {
        0.0
    } else {
        0.5 * r2 * r2.ln()
    }
}

impl ThinPlateSpline {
    /// Fits the spline through `values` at `points`. Fewer than three points,
    /// or collinear points, degrade to the constant mean field.
    pub fn fit(points: &[[f64; 2]], values: &[[f64; 2]]) -> Self {
        assert_eq!(points.len(), values.len());
        let n = points.len();
        let mut origin = [0.0; 2];
        for p in points {
            origin[0] += p[0] / n.max(1) as f64;
            origin[1] += p[1] / n.max(1) as f64;
        }
        let scale = points
            .iter()
            .map(|p| ((p[0] - origin[0]).powi(2) + (p[1] - origin[1]).powi(2)).sqrt())
            .fold(0.0, f64::max)
            .max(1e-12);
        let centers: Vec<[f64; 2]> = points
            .iter()
            .map(|p| [(p[0] - origin[0]) / scale, (p[1] - origin[1]) / scale])
            .collect();

        let constant = |centers: Vec<[f64; 2]>| {
            let mut mean = [0.0; 2];
            for v in values {
                mean[0] += v[0] / n.max(1) as f64;
                mean[1] += v[1] / n.max(1) as f64;
            }
            Self {
                weights: vec![[0.0; 2]; centers.len()],
                centers,
                affine: [[mean[0], 0.0, 0.0], [mean[1], 0.0, 0.0]],
                origin,
                scale,
            }
        };
        if n < 3 {
            return constant(centers);
        }
        // Collinear sites leave the affine part undetermined.
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for c in &centers {
            sxx += c[0] * c[0];
            syy += c[1] * c[1];
            sxy += c[0] * c[1];
        }
        if (sxx * syy - sxy * sxy) / (n as f64 * n as f64) < 1e-12 {
            return constant(centers);
        }

        let m = n + 3;
        let mut a = DMatrix::<f64>::zeros(m, m);
        for i in 0..n {
            for j in 0..i {
                let dx = centers[i][0] - centers[j][0];
                let dy = centers[i][1] - centers[j][1];
                let k = kernel(dx * dx + dy * dy);
                a[(i, j)] = k;
                a[(j, i)] = k;
            }
            let row = [1.0, centers[i][0], centers[i][1]];
            for (c, v) in row.into_iter().enumerate() {
                a[(i, n + c)] = v;
                a[(n + c, i)] = v;
            }
        }
        let lu = a.lu();
        let mut weights = vec![[0.0; 2]; n];
        let mut affine = [[0.0; 3]; 2];
        for dim in 0..2 {
            let mut rhs = DVector::<f64>::zeros(m);
            for i in 0..n {
                rhs[i] = values[i][dim];
            }
            let Some(sol) = lu.solve(&rhs) else {
                return constant(centers);
            };
            if sol.iter().any(|v| !v.is_finite()) {
                return constant(centers);
            }
            for i in 0..n {
                weights[i][dim] = sol[i];
            }
            affine[dim] = [sol[n], sol[n + 1], sol[n + 2]];
        }
        Self {
            centers,
            weights,
            affine,
            origin,
            scale,
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> [f64; 2] {
        let u = (x - self.origin[0]) / self.scale;
        let v = (y - self.origin[1]) / self.scale;
        let mut out = [
            self.affine[0][0] + self.affine[0][1] * u + self.affine[0][2] * v,
            self.affine[1][0] + self.affine[1][1] * u + self.affine[1][2] * v,
        ];
        for (c, w) in self.centers.iter().zip(&self.weights) {
            let k = kernel((u - c[0]).powi(2) + (v - c[1]).powi(2));
            out[0] += w[0] * k;
            out[1] += w[1] * k;
        }
        out
    }
}
