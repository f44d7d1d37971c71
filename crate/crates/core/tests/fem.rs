use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tactile_core::fem::{
    assemble, compute_forces, displacement_field, element_stiffness, CameraModel, CsrMatrix, DisplacementField,
    HexMesh, MaterialParams, HEX_NODES,
};
use tactile_core::frame::{DepthMap, SensorGeometry};
use tactile_core::markers::MotionField;

#[path = "support/fem_oracle.rs"]
mod oracle;

fn unit_cube() -> oracle::Brick {
    oracle::Brick::new([0.0; 3], [1.0; 3], 1.0, 0.0)
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

fn field_from_flat(mesh: &HexMesh, flat: &[f64]) -> DisplacementField {
    let mut u = DisplacementField::zeros(mesh);
    for (n, v) in u.u.iter_mut().enumerate() {
        *v = [flat[3 * n], flat[3 * n + 1], flat[3 * n + 2]];
    }
    u
}

#[test]
fn element_matches_energy_oracle_on_unit_cube() {
    // E in kPa; 1000 kPa is unit stiffness in N/mm^2.
    for (e, nu) in [(1.0, 0.0), (1000.0, 0.0), (85.0, 0.48), (1000.0, 0.3)] {
        let brick = oracle::Brick::new([0.0; 3], [1.0; 3], e, nu);
        let expected = brick.stiffness();
        let params = MaterialParams { young_modulus: e, poisson_ratio: nu };
        let k = element_stiffness(&params, &brick.nodes()).unwrap();
        let got = DMatrix::from_column_slice(24, 24, k.as_slice());
        let diff = max_abs_diff(&got, &expected);
        assert!(diff < 1e-6, "E={e} nu={nu}: max abs diff {diff:e}");
        assert!(diff <= 1e-10 * expected.abs().max(), "E={e} nu={nu}: relative diff {diff:e}");
    }
}

#[test]
fn element_matches_oracle_on_stretched_brick() {
    let brick = oracle::Brick::new([-0.3, 0.2, 0.0], [0.6, 1.7, 2.5], 85.0, 0.48);
    let params = MaterialParams::default();
    let k = element_stiffness(&params, &brick.nodes()).unwrap();
    let got = DMatrix::from_column_slice(24, 24, k.as_slice());
    let expected = brick.stiffness();
    assert!(max_abs_diff(&got, &expected) <= 1e-10 * expected.abs().max());
}

#[test]
fn oracle_sanity_uniaxial_strain_energy() {
    // u_x = x on the unit cube with nu = 0: energy = E/2 * volume.
    let brick = unit_cube();
    let k = brick.stiffness();
    let mut u = DVector::zeros(24);
    for (n, r) in HEX_NODES.iter().enumerate() {
        u[3 * n] = if r[0] < 0.0 { 0.0 } else { 1.0 };
    }
    let energy = 0.5 * (u.transpose() * &k * &u)[0];
    assert!((energy - 0.5e-3).abs() < 1e-15, "{energy}");
}

#[test]
fn single_element_mesh_equals_element_matrix() {
    let params = MaterialParams::default();
    let mesh = HexMesh::structured(1, 1, (2.0, 3.0), 2.5).unwrap();
    let k = assemble(&mesh, &params).unwrap().to_dense();
    let ke = element_stiffness(&params, &mesh.element_nodes(0)).unwrap();
    let conn = mesh.elements[0];
    for a in 0..8 {
        for b in 0..8 {
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(k[(3 * conn[a] + i, 3 * conn[b] + j)], ke[(3 * a + i, 3 * b + j)]);
                }
            }
        }
    }
}

#[test]
fn global_product_matches_dense_assembly() {
    let params = MaterialParams::default();
    let mesh = HexMesh::structured(4, 4, (30.0, 22.5), 2.5).unwrap();
    let k = assemble(&mesh, &params).unwrap();
    let dense = oracle::dense_global(&mesh, &params);
    for seed in 0..5 {
        let u = random_vec(mesh.dofs(), seed);
        let got = k.mul_vec(&u);
        let expected = (&dense * DVector::from_vec(u)).as_slice().to_vec();
        let err = rel_err(&got, &expected);
        assert!(err < 1e-10, "seed {seed}: relative error {err:e}");
    }
}

fn small_mesh_k() -> (HexMesh, CsrMatrix) {
    let mesh = HexMesh::structured(2, 2, (4.0, 3.0), 2.5).unwrap();
    let k = assemble(&mesh, &MaterialParams::default()).unwrap();
    (mesh, k)
}

#[test]
fn global_matrix_is_symmetric() {
    for (nx, ny) in [(1, 1), (2, 1), (4, 4), (32, 24)] {
        let mesh = HexMesh::structured(nx, ny, (30.0, 22.5), 2.5).unwrap();
        let k = assemble(&mesh, &MaterialParams::default()).unwrap();
        assert!(k.max_asymmetry() < 1e-12 * k.frobenius_norm(), "{nx}x{ny}");
    }
}

#[test]
fn exactly_six_rigid_body_modes() {
    let (_, k) = small_mesh_k();
    let eig = SymmetricEigen::new(k.to_dense());
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    let top = *values.last().unwrap();
    assert!(values[0] > -1e-10 * top, "negative eigenvalue {}", values[0]);
    let zero = values.iter().filter(|v| v.abs() < 1e-10 * top).count();
    assert_eq!(zero, 6, "{:?}", &values[..8]);
    assert!(values[6] > 1e-6 * top, "seventh eigenvalue {}", values[6]);
}

fn rotation_field(mesh: &HexMesh, axis: [f64; 3]) -> Vec<f64> {
    mesh.nodes
        .iter()
        .flat_map(|x| {
            [
                axis[1] * x[2] - axis[2] * x[1],
                axis[2] * x[0] - axis[0] * x[2],
                axis[0] * x[1] - axis[1] * x[0],
            ]
        })
        .collect()
}

#[test]
fn rigid_motions_produce_no_force() {
    let params = MaterialParams::default();
    let mesh = HexMesh::structured(2, 1, (4.0, 2.0), 2.5).unwrap();
    let k = assemble(&mesh, &params).unwrap();
    let norm_k = k.frobenius_norm();
    for axis in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.3, -0.7, 0.5]] {
        let u = rotation_field(&mesh, axis);
        let f = k.mul_vec(&u);
        let fmax = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(fmax < 1e-8 * norm_k, "rotation {axis:?}: {fmax:e}");
    }
    for dir in 0..3 {
        let mut u = DisplacementField::zeros(&mesh);
        for v in &mut u.u {
            v[dir] = 1.0;
        }
        let f = compute_forces(&k, &u, &mesh).unwrap();
        let unorm = (mesh.node_count() as f64).sqrt();
        let fmax = f.all.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(fmax < 1e-8 * norm_k * unorm);
    }
}

#[test]
fn zero_field_gives_zero_force() {
    let (mesh, k) = small_mesh_k();
    let f = compute_forces(&k, &DisplacementField::zeros(&mesh), &mesh).unwrap();
    assert!(f.all.iter().flatten().all(|&v| v == 0.0));
    assert_eq!(f.top.len(), mesh.top.len());
}

#[test]
fn dimension_mismatch_is_reported() {
    let (mesh, k) = small_mesh_k();
    let other = HexMesh::structured(3, 2, (4.0, 3.0), 2.5).unwrap();
    assert!(compute_forces(&k, &DisplacementField::zeros(&other), &other).is_err());
    let mut short = DisplacementField::zeros(&mesh);
    short.u.pop();
    assert!(compute_forces(&k, &short, &mesh).is_err());
}

#[test]
fn uniform_press_reaction_matches_dense_oracle() {
    let params = MaterialParams::default();
    let mesh = HexMesh::structured(4, 4, (30.0, 22.5), 2.5).unwrap();
    let k = assemble(&mesh, &params).unwrap();
    let mut u = DisplacementField::zeros(&mesh);
    for &t in &mesh.top {
        u.u[t][2] = -0.5;
    }
    let f = compute_forces(&k, &u, &mesh).unwrap();

    let dense = oracle::dense_global(&mesh, &params);
    let fd = &dense * DVector::from_vec(u.flat());
    let expected_top: f64 = mesh.top.iter().map(|&t| fd[3 * t + 2]).sum();
    let expected_bottom: f64 = mesh.bottom.iter().map(|&b| fd[3 * b + 2]).sum();

    let got_top = f.top_total()[2];
    let got_bottom: f64 = mesh.bottom.iter().map(|&b| f.all[b][2]).sum();
    assert!(((got_top - expected_top) / expected_top).abs() < 1e-8, "{got_top} vs {expected_top}");
    assert!(((got_bottom - expected_bottom) / expected_bottom).abs() < 1e-8);
    // Compression pushes the top surface back up; the bonded base reacts downward.
    assert!(got_top < 0.0 && got_bottom > 0.0);
    assert!((got_top + got_bottom).abs() < 1e-10 * got_top.abs());
}

#[test]
fn stiffer_gel_doubles_the_force() {
    let mesh = HexMesh::structured(4, 3, (30.0, 22.5), 2.5).unwrap();
    let soft = MaterialParams { young_modulus: 85.0, poisson_ratio: 0.45 };
    let hard = MaterialParams { young_modulus: 170.0, ..soft };
    let u = field_from_flat(&mesh, &random_vec(mesh.dofs(), 9));
    let f1 = compute_forces(&assemble(&mesh, &soft).unwrap(), &u, &mesh).unwrap();
    let f2 = compute_forces(&assemble(&mesh, &hard).unwrap(), &u, &mesh).unwrap();
    for (a, b) in f1.all.iter().flatten().zip(f2.all.iter().flatten()) {
        assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1e-12));
    }
}

#[test]
fn inverted_and_invalid_inputs_are_rejected() {
    let params = MaterialParams::default();
    let mut nodes = HEX_NODES;
    nodes.swap(0, 4);
    assert!(element_stiffness(&params, &nodes).is_err());
    for (e, nu) in [(0.0, 0.3), (-5.0, 0.3), (85.0, 0.5), (85.0, -0.1), (f64::NAN, 0.3)] {
        let bad = MaterialParams { young_modulus: e, poisson_ratio: nu };
        assert!(element_stiffness(&bad, &HEX_NODES).is_err(), "E={e} nu={nu}");
    }
    assert!(HexMesh::structured(0, 3, (1.0, 1.0), 1.0).is_err());
    assert!(HexMesh::structured(2, 3, (1.0, 1.0), 0.0).is_err());
}

#[test]
fn mesh_has_expected_shape() {
    let mesh = HexMesh::structured(32, 24, (30.0, 22.5), 2.5).unwrap();
    assert_eq!(mesh.elements.len(), 32 * 24);
    assert_eq!(mesh.node_count(), 33 * 25 * 2);
    assert!(mesh.bottom.iter().all(|&b| mesh.nodes[b][2] == 0.0));
    assert!(mesh.top.iter().all(|&t| mesh.nodes[t][2] == 2.5));
}

fn camera_geometry() -> SensorGeometry {
    SensorGeometry {
        pixel_pitch: 0.047,
        gel_thickness: 2.5,
        sensing_area: (640.0 * 0.047, 480.0 * 0.047),
    }
}

fn still_markers() -> MotionField {
    MotionField::from_pairs(
        [[40.0, 40.0], [600.0, 40.0], [600.0, 440.0], [40.0, 440.0], [320.0, 240.0]].map(|p| (p, p)),
    )
}

#[test]
fn viewing_angle_correction_matches_pinhole_arithmetic() {
    let geom = camera_geometry();
    // Nodes at x = -4.7, 0, 4.7 mm: 100 px either side of the principal point.
    let mesh = HexMesh::structured(2, 2, (9.4, 9.4), 2.5).unwrap();
    let camera = CameraModel::centered(640, 480, 20.0, &geom);
    assert!((camera.distance_mm(&geom) - 20.0).abs() < 1e-12);
    let depth = DepthMap::new(640, 480, vec![0.5; 640 * 480]).unwrap();
    let field = displacement_field(&still_markers(), &depth, &mesh, &geom, &camera);

    let node_at = |x: f64, y: f64| {
        *mesh
            .top
            .iter()
            .find(|&&t| (mesh.nodes[t][0] - x).abs() < 1e-12 && (mesh.nodes[t][1] - y).abs() < 1e-12)
            .unwrap()
    };
    let off_axis = field.u[node_at(4.7, 0.0)];
    assert!((off_axis[2] + 0.5).abs() < 1e-12);
    assert!((off_axis[0].abs() - 0.1175).abs() < 1e-9, "{off_axis:?}");
    assert!(off_axis[1].abs() < 1e-9);
    // Opposite side: equal magnitude, opposite sign.
    let mirrored = field.u[node_at(-4.7, 0.0)];
    assert!((mirrored[0] + off_axis[0]).abs() < 1e-9);

    let center = field.u[node_at(0.0, 0.0)];
    assert!(center[0].abs() < 1e-9 && center[1].abs() < 1e-9);
    assert!((center[2] + 0.5).abs() < 1e-12);
    for &b in &mesh.bottom {
        assert_eq!(field.u[b], [0.0; 3]);
    }
}

#[test]
fn zero_motion_and_depth_give_zero_field() {
    let geom = camera_geometry();
    let mesh = HexMesh::for_sensor(8, 6, &geom).unwrap();
    let camera = CameraModel::centered(640, 480, 20.0, &geom);
    let field = displacement_field(&still_markers(), &DepthMap::zeros(640, 480), &mesh, &geom, &camera);
    assert!(field.u.iter().flatten().all(|v| v.abs() < 1e-9));
}

#[test]
fn marker_translation_maps_to_millimetres() {
    let geom = camera_geometry();
    let mesh = HexMesh::structured(4, 4, (10.0, 10.0), 2.5).unwrap();
    let camera = CameraModel::centered(640, 480, 20.0, &geom);
    let motion = MotionField::from_pairs(
        [[40.0, 40.0], [600.0, 40.0], [600.0, 440.0], [40.0, 440.0], [320.0, 240.0]]
            .map(|p| (p, [p[0] + 3.0, p[1] - 2.0])),
    );
    let field = displacement_field(&motion, &DepthMap::zeros(640, 480), &mesh, &geom, &camera);
    for &t in &mesh.top {
        assert!((field.u[t][0] - 3.0 * 0.047).abs() < 1e-9);
        assert!((field.u[t][1] + 2.0 * 0.047).abs() < 1e-9);
        assert!(!field.extrapolated[t]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn stiffness_is_positive_semidefinite(seed in any::<u64>()) {
        let (_, k) = small_mesh_k();
        let x = random_vec(k.n, seed);
        let kx = k.mul_vec(&x);
        let quad: f64 = x.iter().zip(&kx).map(|(a, b)| a * b).sum();
        let xx: f64 = x.iter().map(|v| v * v).sum();
        prop_assert!(quad >= -1e-10 * k.frobenius_norm() * xx);
    }

    #[test]
    fn forces_balance(seed in any::<u64>(), nx in 1usize..5, ny in 1usize..5) {
        let mesh = HexMesh::structured(nx, ny, (30.0, 22.5), 2.5).unwrap();
        let k = assemble(&mesh, &MaterialParams::default()).unwrap();
        let u = field_from_flat(&mesh, &random_vec(mesh.dofs(), seed));
        let f = compute_forces(&k, &u, &mesh).unwrap();
        let norm = f.all.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        let total = f.total();
        for c in total {
            prop_assert!(c.abs() <= 1e-8 * norm, "{total:?} vs {norm}");
        }
    }

    #[test]
    fn forces_are_linear(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let (mesh, k) = small_mesh_k();
        let u1 = random_vec(mesh.dofs(), seed);
        let u2 = random_vec(mesh.dofs(), seed.wrapping_add(1));
        let mix: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| alpha * a + beta * b).collect();
        let f1 = k.mul_vec(&u1);
        let f2 = k.mul_vec(&u2);
        let fm = k.mul_vec(&mix);
        let scale = k.frobenius_norm() * (alpha.abs() + beta.abs() + 1.0);
        for i in 0..fm.len() {
            prop_assert!((fm[i] - (alpha * f1[i] + beta * f2[i])).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn any_rotation_axis_is_in_the_null_space(ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0) {
        let mesh = HexMesh::structured(2, 1, (4.0, 2.0), 2.5).unwrap();
        let k = assemble(&mesh, &MaterialParams::default()).unwrap();
        let f = k.mul_vec(&rotation_field(&mesh, [ax, ay, az]));
        let fmax = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(fmax < 1e-8 * k.frobenius_norm());
    }

    #[test]
    fn tangential_normal_split_is_lossless(seed in any::<u64>()) {
        let (mesh, k) = small_mesh_k();
        let u = field_from_flat(&mesh, &random_vec(mesh.dofs(), seed));
        let f = compute_forces(&k, &u, &mesh).unwrap();
        for nf in &f.top {
            let [fx, fy] = nf.tangential();
            prop_assert_eq!([fx, fy, nf.normal()], f.all[nf.node]);
        }
    }
}
