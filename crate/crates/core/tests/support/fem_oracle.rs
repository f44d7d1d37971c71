//! Stiffness of an axis-aligned brick computed without shape-function
//! derivatives: the trilinear displacement field is evaluated directly in
//! physical coordinates, strains come from central differences (exact for a
//! field linear in each coordinate), the energy density
//! `mu e:e + lambda/2 (tr e)^2` is integrated with 3-point Gauss per axis, and
//! `K_ij` follows from the polarization identity of the quadratic energy.

use nalgebra::DMatrix;
use tactile_core::fem::{HexMesh, MaterialParams, HEX_NODES};

pub struct Brick {
    lo: [f64; 3],
    hi: [f64; 3],
    mu: f64,
    lambda: f64,
}

impl Brick {
    pub fn new(lo: [f64; 3], hi: [f64; 3], e_kpa: f64, nu: f64) -> Self {
        let e = e_kpa * 1e-3;
        Self {
            lo,
            hi,
            mu: e / (2.0 * (1.0 + nu)),
            lambda: e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)),
        }
    }

    pub fn nodes(&self) -> [[f64; 3]; 8] {
        HEX_NODES.map(|r| {
            let mut p = [0.0; 3];
            for a in 0..3 {
                p[a] = if r[a] < 0.0 { self.lo[a] } else { self.hi[a] };
            }
            p
        })
    }

    fn displacement(&self, u: &[f64; 24], x: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (n, r) in HEX_NODES.iter().enumerate() {
            let mut w = 1.0;
            for a in 0..3 {
                let t = (x[a] - self.lo[a]) / (self.hi[a] - self.lo[a]);
                w *= if r[a] < 0.0 { 1.0 - t } else { t };
            }
            for c in 0..3 {
                out[c] += w * u[3 * n + c];
            }
        }
        out
    }

    fn energy_density(&self, u: &[f64; 24], x: [f64; 3]) -> f64 {
        let mut grad = [[0.0; 3]; 3];
        for b in 0..3 {
            let h = 0.25 * (self.hi[b] - self.lo[b]);
            let (mut xp, mut xm) = (x, x);
            xp[b] += h;
            xm[b] -= h;
            let (up, um) = (self.displacement(u, xp), self.displacement(u, xm));
            for a in 0..3 {
                grad[a][b] = (up[a] - um[a]) / (2.0 * h);
            }
        }
        let mut eps_sq = 0.0;
        let mut trace = 0.0;
        for a in 0..3 {
            trace += grad[a][a];
            for b in 0..3 {
                let e = 0.5 * (grad[a][b] + grad[b][a]);
                eps_sq += e * e;
            }
        }
        self.mu * eps_sq + 0.5 * self.lambda * trace * trace
    }

    fn energy(&self, u: &[f64; 24]) -> f64 {
        let g = (0.6f64).sqrt();
        let rule = [(-g, 5.0 / 9.0), (0.0, 8.0 / 9.0), (g, 5.0 / 9.0)];
        let half: Vec<f64> = (0..3).map(|a| 0.5 * (self.hi[a] - self.lo[a])).collect();
        let mid: Vec<f64> = (0..3).map(|a| 0.5 * (self.hi[a] + self.lo[a])).collect();
        let mut total = 0.0;
        for &(s, ws) in &rule {
            for &(t, wt) in &rule {
                for &(r, wr) in &rule {
                    let x = [mid[0] + half[0] * s, mid[1] + half[1] * t, mid[2] + half[2] * r];
                    total += ws * wt * wr * self.energy_density(u, x);
                }
            }
        }
        total * half[0] * half[1] * half[2]
    }

    pub fn stiffness(&self) -> DMatrix<f64> {
        let unit = |i: usize| {
            let mut u = [0.0; 24];
            u[i] = 1.0;
            u
        };
        let diag: Vec<f64> = (0..24).map(|i| self.energy(&unit(i))).collect();
        DMatrix::from_fn(24, 24, |i, j| {
            let mut u = unit(i);
            u[j] += 1.0;
            if i == j {
                // Energy of 2 e_i is 4 Pi(e_i) = 2 K_ii.
                self.energy(&u) / 2.0
            } else {
                self.energy(&u) - diag[i] - diag[j]
            }
        })
    }
}

/// Dense global matrix by element-by-element scatter of oracle bricks.
pub fn dense_global(mesh: &HexMesh, params: &MaterialParams) -> DMatrix<f64> {
    let n = mesh.dofs();
    let mut k = DMatrix::zeros(n, n);
    for conn in &mesh.elements {
        let lo = mesh.nodes[conn[0]];
        let hi = mesh.nodes[conn[6]];
        let ke = Brick::new(lo, hi, params.young_modulus, params.poisson_ratio).stiffness();
        for a in 0..8 {
            for b in 0..8 {
                for i in 0..3 {
                    for j in 0..3 {
                        k[(3 * conn[a] + i, 3 * conn[b] + j)] += ke[(3 * a + i, 3 * b + j)];
                    }
                }
            }
        }
    }
    k
}
