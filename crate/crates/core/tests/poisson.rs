use std::f64::consts::PI;

use proptest::prelude::*;
use tactile_core::frame::{GradientField, SensorGeometry};
use tactile_core::poisson::{laplacian, poisson_integrate, PoissonSolver};
use tactile_core::simulator::{sphere_gradients, sphere_indenter};

fn product_sine(n: usize) -> (Vec<f64>, GradientField) {
    let l = (n - 1) as f64;
    let mut z = vec![0.0; n * n];
    let mut g = GradientField::zeros(n, n);
    for y in 0..n {
        for x in 0..n {
            let (a, b) = (PI * x as f64 / l, PI * y as f64 / l);
            z[y * n + x] = a.sin() * b.sin();
            g.set(x, y, PI / l * a.cos() * b.sin(), PI / l * a.sin() * b.cos());
        }
    }
    (z, g)
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

#[test]
fn product_sine_is_recovered() {
    let (z, g) = product_sine(128);
    let solver = PoissonSolver::new(128, 128).unwrap();
    let out = solver.integrate_unclamped(&g, None, 1.0).unwrap();
    let err = rel_l2(&out, &z);
    assert!(err < 1e-3, "relative L2 error {err}");
}

#[test]
fn discrete_residual_is_tiny() {
    let (_, g) = product_sine(128);
    let solver = PoissonSolver::new(128, 128).unwrap();
    let z = solver.integrate_unclamped(&g, None, 1.0).unwrap();
    let div = solver.divergence(&g, None);
    let lap = laplacian(&z, 128, 128);
    let num: f64 = lap.iter().zip(&div).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let den: f64 = div.iter().map(|b| b * b).sum::<f64>().sqrt();
    assert!(num / den < 1e-8, "{}", num / den);
}

#[test]
fn spherical_cap_peak_within_five_percent() {
    let geom = SensorGeometry::default();
    let (w, h) = (320, 240);
    let center = [160.0, 120.0];
    let g = sphere_gradients(3.0, center, 1.0, &geom, w, h).unwrap();
    let truth = sphere_indenter(3.0, center, 1.0, &geom, w, h).unwrap();
    let out = poisson_integrate(&g, None, geom.pixel_pitch).unwrap();
    let peak = out.depth.max();
    assert!((peak - 1.0).abs() < 0.05, "peak {peak}");
    let (px, py) = out.depth.argmax();
    assert!((px as f64 - center[0]).abs() <= 1.0 && (py as f64 - center[1]).abs() <= 1.0);
    assert_eq!(truth.argmax(), (160, 120));
}

#[test]
fn rectangular_grids_are_supported() {
    let (w, h) = (97, 64);
    let mut z = vec![0.0; w * h];
    let mut g = GradientField::zeros(w, h);
    let (lx, ly) = ((w - 1) as f64, (h - 1) as f64);
    for y in 0..h {
        for x in 0..w {
            let (a, b) = (2.0 * PI * x as f64 / lx, PI * y as f64 / ly);
            z[y * w + x] = a.sin() * b.sin();
            g.set(x, y, 2.0 * PI / lx * a.cos() * b.sin(), PI / ly * a.sin() * b.cos());
        }
    }
    let out = PoissonSolver::new(w, h).unwrap().integrate_unclamped(&g, None, 1.0).unwrap();
    assert!(rel_l2(&out, &z) < 1e-3);
}

fn field(w: usize, h: usize, seed: &[f64]) -> GradientField {
    let mut g = GradientField::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) % seed.len();
            g.set(x, y, seed[i], seed[(i * 7 + 3) % seed.len()]);
        }
    }
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn solver_is_linear(
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        s1 in prop::collection::vec(-1.0f64..1.0, 37),
        s2 in prop::collection::vec(-1.0f64..1.0, 41),
    ) {
        let (w, h) = (48, 36);
        let (g1, g2) = (field(w, h, &s1), field(w, h, &s2));
        let solver = PoissonSolver::new(w, h).unwrap();
        let z1 = solver.integrate_unclamped(&g1, None, 0.05).unwrap();
        let z2 = solver.integrate_unclamped(&g2, None, 0.05).unwrap();
        let zc = solver.integrate_unclamped(&g1.combine(a, &g2, b), None, 0.05).unwrap();
        let expect: Vec<f64> = z1.iter().zip(&z2).map(|(x, y)| a * x + b * y).collect();
        let scale = expect.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let diff = zc.iter().zip(&expect).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        prop_assert!(diff / scale < 1e-10 || diff < 1e-14, "{}", diff / scale);
    }

    #[test]
    fn residual_holds_for_arbitrary_fields(s in prop::collection::vec(-2.0f64..2.0, 53)) {
        let (w, h) = (40, 30);
        let g = field(w, h, &s);
        let solver = PoissonSolver::new(w, h).unwrap();
        let z = solver.integrate_unclamped(&g, None, 1.0).unwrap();
        let div = solver.divergence(&g, None);
        let lap = laplacian(&z, w, h);
        let interior = |v: &[f64]| -> Vec<f64> {
            (1..h - 1).flat_map(|y| (1..w - 1).map(move |x| (x, y))).map(|(x, y)| v[y * w + x]).collect()
        };
        let (lap, div) = (interior(&lap), interior(&div));
        let num: f64 = lap.iter().zip(&div).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = div.iter().map(|b| b * b).sum::<f64>().sqrt();
        prop_assume!(den > 1e-9);
        prop_assert!(num / den < 1e-8);
    }

    #[test]
    fn clamped_output_is_nonnegative(s in prop::collection::vec(-2.0f64..2.0, 29)) {
        let out = poisson_integrate(&field(24, 20, &s), None, 0.1).unwrap();
        prop_assert!(out.depth.values().iter().all(|&v| v >= 0.0));
    }
}
