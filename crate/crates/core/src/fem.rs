//! Linear-elastic hexahedral FEM model of the gel: `F = K U`.
//!
//! The gel is one layer of trilinear 8-node bricks. Bottom nodes are bonded
//! to the lens (fixed). Top nodes take in-plane displacement from the
//! interpolated marker motion and normal displacement from the depth map.
//!
//! Units: lengths in mm, Young's modulus in kPa (converted to N/mm²
//! internally), so `K` is in N/mm and forces in N.

use nalgebra::{Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{DepthMap, SensorGeometry};
use crate::markers::MotionField;
use crate::tps::ThinPlateSpline;

pub type ElementMatrix = SMatrix<f64, 24, 24>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("inverted or degenerate element {element} (det J = {det:e})")]
    InvertedElement { element: usize, det: f64 },
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("dimension mismatch: expected {expected} dofs, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialParams {
    /// kPa.
    pub young_modulus: f64,
    pub poisson_ratio: f64,
}

impl Default for MaterialParams {
    /// Placeholder values; the gel's measured constants are not published.
    fn default() -> Self {
        Self {
            young_modulus: 85.0,
            poisson_ratio: 0.48,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<(), FemError> {
        if !(self.young_modulus > 0.0) {
            return Err(FemError::InvalidMaterial(format!(
                "Young's modulus must be positive, got {}",
                self.young_modulus
            )));
        }
        if !(0.0..0.5).contains(&self.poisson_ratio) {
            return Err(FemError::InvalidMaterial(format!(
                "Poisson ratio must lie in [0, 0.5), got {}",
                self.poisson_ratio
            )));
        }
        Ok(())
    }

    /// Isotropic elasticity matrix (N/mm²), Voigt order xx, yy, zz, xy, yz, zx
    /// with engineering shear strains.
    pub fn elasticity(&self) -> SMatrix<f64, 6, 6> {
        let e = self.young_modulus * 1e-3;
        let nu = self.poisson_ratio;
        let c = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
        let mut d = SMatrix::<f64, 6, 6>::zeros();
        for i in 0..3 {
            for j in 0..3 {
                d[(i, j)] = if i == j { c * (1.0 - nu) } else { c * nu };
            }
            d[(i + 3, i + 3)] = c * (1.0 - 2.0 * nu) / 2.0;
        }
        d
    }
}

/// Reference coordinates of the 8 nodes, bottom face first, counter-clockwise.
pub const HEX_NODES: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

/// Trilinear shape-function derivatives with respect to (ξ, η, ζ).
fn shape_derivatives(xi: f64, eta: f64, zeta: f64) -> [[f64; 3]; 8] {
    let mut out = [[0.0; 3]; 8];
    for (a, n) in HEX_NODES.iter().enumerate() {
        let (fx, fy, fz) = (1.0 + n[0] * xi, 1.0 + n[1] * eta, 1.0 + n[2] * zeta);
        out[a] = [n[0] * fy * fz / 8.0, n[1] * fx * fz / 8.0, n[2] * fx * fy / 8.0];
    }
    out
}

fn gauss_points() -> impl Iterator<Item = [f64; 3]> {
    let g = 1.0 / 3f64.sqrt();
    let pts = [-g, g];
    pts.into_iter()
        .flat_map(move |a| pts.into_iter().flat_map(move |b| pts.into_iter().map(move |c| [a, b, c])))
}

fn jacobian(nodes: &[[f64; 3]; 8], dn: &[[f64; 3]; 8]) -> Matrix3<f64> {
    let mut j = Matrix3::zeros();
    for a in 0..8 {
        for r in 0..3 {
            for c in 0..3 {
                j[(r, c)] += dn[a][r] * nodes[a][c];
            }
        }
    }
    j
}

/// 24x24 stiffness of one trilinear brick, 2x2x2 Gauss quadrature.
/// Degrees of freedom are ordered node-major: `(u_x, u_y, u_z)` per node.
pub fn element_stiffness(params: &MaterialParams, nodes: &[[f64; 3]; 8]) -> Result<ElementMatrix, FemError> {
    params.validate()?;
    let d = params.elasticity();
    let mut k = ElementMatrix::zeros();
    for gp in gauss_points() {
        let dn = shape_derivatives(gp[0], gp[1], gp[2]);
        let j = jacobian(nodes, &dn);
        let det = j.determinant();
        if !(det > 0.0) {
            return Err(FemError::InvertedElement { element: 0, det });
        }
        let jinv = j.try_inverse().ok_or(FemError::InvertedElement { element: 0, det })?;
        let mut b = SMatrix::<f64, 6, 24>::zeros();
        for a in 0..8 {
            let g = jinv * Vector3::new(dn[a][0], dn[a][1], dn[a][2]);
            let (bx, by, bz) = (g[0], g[1], g[2]);
            let c = 3 * a;
            b[(0, c)] = bx;
            b[(1, c + 1)] = by;
            b[(2, c + 2)] = bz;
            b[(3, c)] = by;
            b[(3, c + 1)] = bx;
            b[(4, c + 1)] = bz;
            b[(4, c + 2)] = by;
            b[(5, c)] = bz;
            b[(5, c + 2)] = bx;
        }
        k += b.transpose() * d * b * det;
    }
    // Exact symmetry; quadrature rounding leaves ~1e-17 asymmetry otherwise.
    Ok((k + k.transpose()) * 0.5)
}

/// Single-layer structured hex mesh of the gel.
#[derive(Debug, Clone, PartialEq)]
pub struct HexMesh {
    pub nx: usize,
    pub ny: usize,
    /// Node coordinates (x, y, z) in mm; z = 0 at the bonded bottom.
    pub nodes: Vec<[f64; 3]>,
    pub elements: Vec<[usize; 8]>,
    pub top: Vec<usize>,
    pub bottom: Vec<usize>,
}

impl HexMesh {
    /// `nx x ny x 1` bricks spanning `extent` (mm) centred on the origin.
    pub fn structured(nx: usize, ny: usize, extent: (f64, f64), thickness: f64) -> Result<Self, FemError> {
        if nx == 0 || ny == 0 || !(extent.0 > 0.0 && extent.1 > 0.0 && thickness > 0.0) {
            return Err(FemError::InvalidMesh(format!(
                "{nx}x{ny} elements over {:?} mm with thickness {thickness}",
                extent
            )));
        }
        let layer = (nx + 1) * (ny + 1);
        let mut nodes = Vec::with_capacity(2 * layer);
        for k in 0..2 {
            for j in 0..=ny {
                for i in 0..=nx {
                    nodes.push([
                        -extent.0 / 2.0 + extent.0 * i as f64 / nx as f64,
                        -extent.1 / 2.0 + extent.1 * j as f64 / ny as f64,
                        thickness * k as f64,
                    ]);
                }
            }
        }
        let id = |i: usize, j: usize, k: usize| k * layer + j * (nx + 1) + i;
        let mut elements = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                elements.push([
                    id(i, j, 0),
                    id(i + 1, j, 0),
                    id(i + 1, j + 1, 0),
                    id(i, j + 1, 0),
                    id(i, j, 1),
                    id(i + 1, j, 1),
                    id(i + 1, j + 1, 1),
                    id(i, j + 1, 1),
                ]);
            }
        }
        let mesh = Self {
            nx,
            ny,
            nodes,
            elements,
            bottom: (0..layer).collect(),
            top: (layer..2 * layer).collect(),
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Mesh covering the whole sensing area.
    pub fn for_sensor(nx: usize, ny: usize, geometry: &SensorGeometry) -> Result<Self, FemError> {
        Self::structured(nx, ny, geometry.sensing_area, geometry.gel_thickness)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn dofs(&self) -> usize {
        3 * self.nodes.len()
    }

    pub fn element_nodes(&self, e: usize) -> [[f64; 3]; 8] {
        self.elements[e].map(|n| self.nodes[n])
    }

    pub fn validate(&self) -> Result<(), FemError> {
        let layer = (self.nx + 1) * (self.ny + 1);
        if self.elements.len() != self.nx * self.ny || self.nodes.len() != 2 * layer {
            return Err(FemError::InvalidMesh(format!(
                "expected {} elements and {} nodes, found {} and {}",
                self.nx * self.ny,
                2 * layer,
                self.elements.len(),
                self.nodes.len()
            )));
        }
        for (e, conn) in self.elements.iter().enumerate() {
            if conn.iter().any(|&n| n >= self.nodes.len()) {
                return Err(FemError::InvalidMesh(format!("element {e} references a missing node")));
            }
            let nodes = self.element_nodes(e);
            for gp in gauss_points() {
                let det = jacobian(&nodes, &shape_derivatives(gp[0], gp[1], gp[2])).determinant();
                if !(det > 0.0) {
                    return Err(FemError::InvertedElement { element: e, det });
                }
            }
        }
        Ok(())
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate entries.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(|k| self.values[k] * x[self.col_idx[k]])
                    .sum()
            })
            .collect()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.col_idx[k])] = self.values[k];
            }
        }
        m
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let row = &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]];
        row.binary_search(&c)
            .map(|k| self.values[self.row_ptr[r] + k])
            .unwrap_or(0.0)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `max |K_ij - K_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                worst = worst.max((self.values[k] - self.get(self.col_idx[k], r)).abs());
            }
        }
        worst
    }
}

/// Global stiffness by scatter-add of element matrices (unconstrained).
pub fn assemble(mesh: &HexMesh, params: &MaterialParams) -> Result<CsrMatrix, FemError> {
    params.validate()?;
    mesh.validate()?;
    let mut triplets = Vec::with_capacity(mesh.elements.len() * 576);
    for (e, conn) in mesh.elements.iter().enumerate() {
        let ke = element_stiffness(params, &mesh.element_nodes(e)).map_err(|err| match err {
            FemError::InvertedElement { det, .. } => FemError::InvertedElement { element: e, det },
            other => other,
        })?;
        for a in 0..8 {
            for b in 0..8 {
                for i in 0..3 {
                    for j in 0..3 {
                        triplets.push((3 * conn[a] + i, 3 * conn[b] + j, ke[(3 * a + i, 3 * b + j)]));
                    }
                }
            }
        }
    }
    Ok(CsrMatrix::from_triplets(mesh.dofs(), triplets))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeSource {
    MeasuredTop,
    FixedBottom,
}

/// Nodal displacements `U` (mm).
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    pub u: Vec<[f64; 3]>,
    pub source: Vec<NodeSource>,
    /// Top nodes outside the convex hull of the markers (extrapolated).
    pub extrapolated: Vec<bool>,
}

impl DisplacementField {
    pub fn zeros(mesh: &HexMesh) -> Self {
        let mut source = vec![NodeSource::FixedBottom; mesh.node_count()];
        for &t in &mesh.top {
            source[t] = NodeSource::MeasuredTop;
        }
        Self {
            u: vec![[0.0; 3]; mesh.node_count()],
            source,
            extrapolated: vec![false; mesh.node_count()],
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.u.iter().flat_map(|v| v.iter().copied()).collect()
    }
}

/// Pinhole camera looking at the gel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    /// px.
    pub principal_point: [f64; 2],
    /// px.
    pub focal_length_px: f64,
}

impl CameraModel {
    /// Camera centered on the frame at `distance_mm` from the gel.
    pub fn centered(width: usize, height: usize, distance_mm: f64, geometry: &SensorGeometry) -> Self {
        Self {
            principal_point: [(width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0],
            focal_length_px: distance_mm / geometry.pixel_pitch,
        }
    }

    /// Distance from the optical center to the gel plane, mm.
    pub fn distance_mm(&self, geometry: &SensorGeometry) -> f64 {
        self.focal_length_px * geometry.pixel_pitch
    }
}

fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn inside_hull(hull: &[[f64; 2]], p: [f64; 2]) -> bool {
    if hull.len() < 3 {
        return false;
    }
    (0..hull.len()).all(|i| {
        let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
        (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= -1e-9
    })
}

/// Builds `U` for one frame.
///
/// Top-node `δx, δy` come from a thin-plate interpolation of the marker
/// displacements (px → mm); `δz` is minus the bilinearly sampled depth. The
/// apparent in-plane shift of a node displaced along the viewing ray,
/// `δz · offset / distance`, is subtracted from `δx, δy`.
pub fn displacement_field(
    motion: &MotionField,
    depth: &DepthMap,
    mesh: &HexMesh,
    geometry: &SensorGeometry,
    camera: &CameraModel,
) -> DisplacementField {
    let refs: Vec<[f64; 2]> = motion.correspondences.iter().map(|c| c.ref_pos).collect();
    let disp: Vec<[f64; 2]> = motion.correspondences.iter().map(|c| c.displacement).collect();
    let spline = ThinPlateSpline::fit(&refs, &disp);
    let hull = convex_hull(&refs);
    let pitch = geometry.pixel_pitch;
    let distance = camera.distance_mm(geometry);
    let mut field = DisplacementField::zeros(mesh);
    for &n in &mesh.top {
        let node = mesh.nodes[n];
        let (px, py) = geometry.mm_to_px(node[0], node[1]);
        let d = spline.eval(px, py);
        let dz = -depth.sample_bilinear(px, py);
        let off_x = (px - camera.principal_point[0]) * pitch;
        let off_y = (py - camera.principal_point[1]) * pitch;
        field.u[n] = [d[0] * pitch - dz * off_x / distance, d[1] * pitch - dz * off_y / distance, dz];
        field.extrapolated[n] = !inside_hull(&hull, [px, py]);
    }
    field
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeForce {
    pub node: usize,
    /// mm.
    pub x: f64,
    pub y: f64,
    /// N.
    pub fx: f64,
    pub fy: f64,
    pub fz: f64,
}

impl NodeForce {
    pub fn tangential(&self) -> [f64; 2] {
        [self.fx, self.fy]
    }

    pub fn normal(&self) -> f64 {
        self.fz
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForceField {
    /// Forces at top-surface nodes.
    pub top: Vec<NodeForce>,
    /// Forces at every node, reactions at fixed nodes included.
    pub all: Vec<[f64; 3]>,
}

impl ForceField {
    pub fn total(&self) -> [f64; 3] {
        self.all.iter().fold([0.0; 3], |acc, f| [acc[0] + f[0], acc[1] + f[1], acc[2] + f[2]])
    }

    pub fn top_total(&self) -> [f64; 3] {
        self.top
            .iter()
            .fold([0.0; 3], |acc, f| [acc[0] + f.fx, acc[1] + f.fy, acc[2] + f.fz])
    }

    /// CSV columns `x,y,fx,fy,fz` for top nodes.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "fx", "fy", "fz"])?;
        for f in &self.top {
            w.serialize((f.x, f.y, f.fx, f.fy, f.fz))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `F = K U` as a sparse mat-vec.
pub fn compute_forces(k: &CsrMatrix, u: &DisplacementField, mesh: &HexMesh) -> Result<ForceField, FemError> {
    if k.n != mesh.dofs() || u.u.len() != mesh.node_count() {
        return Err(FemError::DimensionMismatch {
            expected: mesh.dofs(),
            got: if k.n != mesh.dofs() { k.n } else { 3 * u.u.len() },
        });
    }
    let f = k.mul_vec(&u.flat());
    let all: Vec<[f64; 3]> = f.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    let top = mesh
        .top
        .iter()
        .map(|&n| NodeForce {
            node: n,
            x: mesh.nodes[n][0],
            y: mesh.nodes[n][1],
            fx: all[n][0],
            fy: all[n][1],
            fz: all[n][2],
        })
        .collect();
    Ok(ForceField { top, all })
}
