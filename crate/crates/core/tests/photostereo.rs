use std::sync::OnceLock;

use tactile_core::frame::{GradientField, SensorGeometry, TactileImage};
use tactile_core::photostereo::{
    calibrate, lookup_gradients, Bin, CalibrationConfig, CalibrationTable, PhotostereoError, Press, Quantization,
    TableMetadata, TABLE_VERSION,
};
use tactile_core::simulator::{
    contact_radius, generate_calibration_set, render, sphere_gradients, sphere_indenter, CalibrationSample,
    CalibrationSetSpec, IlluminationConfig, Scene,
};

const W: usize = 640;
const H: usize = 480;

struct Fixture {
    geometry: SensorGeometry,
    illum: IlluminationConfig,
    base: Scene,
    reference: TactileImage,
    set: Vec<CalibrationSample>,
    table: CalibrationTable,
}

fn to_press(s: &CalibrationSample) -> Press {
    Press {
        image: s.image.clone(),
        center: s.center,
        contact_radius_px: s.contact_radius_px,
    }
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let geometry = SensorGeometry::default();
        let illum = IlluminationConfig::directional_ideal();
        let base = Scene::flat(W, H, geometry);
        let reference = render(&base, &illum).unwrap();
        let spec = CalibrationSetSpec {
            n_positions: 5,
            seed: 11,
            ..Default::default()
        };
        let set = generate_calibration_set(&spec, &illum, &base).unwrap();
        let presses: Vec<Press> = set.iter().map(to_press).collect();
        let table = calibrate(&presses, &reference, &geometry, 3.0, &CalibrationConfig::default()).unwrap();
        Fixture {
            geometry,
            illum,
            base,
            reference,
            set,
            table,
        }
    })
}

/// RMS of the gradient error over pixels at least one pixel inside the rim.
fn interior_rms(est: &GradientField, truth: &GradientField, center: [f64; 2], rc_px: f64) -> f64 {
    let (mut se, mut n) = (0.0, 0usize);
    for y in 0..est.height() {
        for x in 0..est.width() {
            if (x as f64 - center[0]).hypot(y as f64 - center[1]) < rc_px - 1.0 {
                let (a, b) = est.get(x, y);
                let (c, d) = truth.get(x, y);
                se += (a - c).powi(2) + (b - d).powi(2);
                n += 1;
            }
        }
    }
    (se / n as f64).sqrt()
}

#[test]
fn calibrated_bins_match_analytic_gradients() {
    let f = fixture();
    let quant = f.table.quantization();
    let (mut se, mut n) = (0.0, 0usize);
    for s in &f.set {
        for y in 0..H {
            for x in 0..W {
                if (x as f64 - s.center[0]).hypot(y as f64 - s.center[1]) >= s.contact_radius_px - 1.0 {
                    continue;
                }
                let (c, r) = (s.image.get(x, y), f.reference.get(x, y));
                if (0..3).all(|k| (c[k] - r[k]).abs() < 0.01) {
                    continue;
                }
                let bin = f.table.bin(quant.index(c, r));
                assert!(bin.count >= 1);
                let (p, q) = s.gradients.get(x, y);
                se += (bin.p - p).powi(2) + (bin.q - q).powi(2);
                n += 1;
            }
        }
    }
    let rms = (se / n as f64).sqrt();
    assert!(rms < 0.02, "calibration RMS {rms}");
}

#[test]
fn reference_color_bin_is_flat() {
    let f = fixture();
    let r = f.reference.get(320, 240);
    let (p, q, d) = f.table.resolve(f.table.quantization().index(r, r));
    assert!(d <= 1.0);
    assert!(p.abs() < 0.05 && q.abs() < 0.05, "({p}, {q})");
}

#[test]
fn single_press_apex_bin_is_flat() {
    let f = fixture();
    let s = &f.set[0];
    let t = calibrate(&[to_press(s)], &f.reference, &f.geometry, 3.0, &CalibrationConfig::default()).unwrap();
    let (cx, cy) = (s.center[0].round() as usize, s.center[1].round() as usize);
    // Apex pixels are within tolerance of the reference; the bin next to them holds near-zero gradients.
    let l = lookup_gradients(&s.image, &f.reference, &t).unwrap();
    let (p, q) = l.gradients.get(cx, cy);
    assert!(p.abs() < 0.05 && q.abs() < 0.05);
    let r = f.reference.get(cx, cy);
    let (p, q, d) = t.resolve(t.quantization().index(r, r));
    assert!(d <= 1.0 && p.abs() < 0.05 && q.abs() < 0.05, "({p}, {q}) at distance {d}");
}

#[test]
fn calibration_preconditions() {
    let f = fixture();
    let cfg = CalibrationConfig::default();
    assert!(matches!(
        calibrate(&[], &f.reference, &f.geometry, 3.0, &cfg),
        Err(PhotostereoError::NoPresses)
    ));
    let mut p = to_press(&f.set[0]);
    assert!(matches!(
        calibrate(&[p.clone()], &f.reference, &f.geometry, 0.0, &cfg),
        Err(PhotostereoError::InvalidRadius(_))
    ));
    p.center = [5.0, 5.0];
    assert!(matches!(
        calibrate(&[p], &f.reference, &f.geometry, 3.0, &cfg),
        Err(PhotostereoError::ContactOutOfBounds { .. })
    ));
}

#[test]
fn unseen_press_gradients_within_tolerance() {
    let f = fixture();
    let center = [401.3, 187.6];
    let depth = sphere_indenter(3.0, center, 1.0, &f.geometry, W, H).unwrap();
    let truth = sphere_gradients(3.0, center, 1.0, &f.geometry, W, H).unwrap();
    let img = render(&f.base.clone().with_height(depth), &f.illum).unwrap();
    let l = lookup_gradients(&img, &f.reference, &f.table).unwrap();
    let rc = contact_radius(3.0, 1.0) / f.geometry.pixel_pitch;
    let rms = interior_rms(&l.gradients, &truth, center, rc);
    assert!(rms < 0.05, "lookup RMS {rms}");
    assert!(l.diagnostics.fallback_fraction < 0.05);
    assert_eq!(l.diagnostics.saturated_fraction, 0.0);
}

#[test]
fn identical_frame_gives_zero_field() {
    let f = fixture();
    let l = lookup_gradients(&f.reference, &f.reference, &f.table).unwrap();
    assert!(l.gradients.p().iter().chain(l.gradients.q()).all(|&v| v == 0.0));
}

#[test]
fn lookup_reproduces_calibration_bins() {
    let f = fixture();
    let quant = f.table.quantization();
    for s in &f.set {
        let l = lookup_gradients(&s.image, &f.reference, &f.table).unwrap();
        for y in 0..H {
            for x in 0..W {
                if (x as f64 - s.center[0]).hypot(y as f64 - s.center[1]) >= s.contact_radius_px - 1.0 {
                    continue;
                }
                let (c, r) = (s.image.get(x, y), f.reference.get(x, y));
                if (0..3).all(|k| (c[k] - r[k]).abs() < 0.01) {
                    continue;
                }
                let bin = f.table.bin(quant.index(c, r));
                assert_eq!(l.gradients.get(x, y), (bin.p, bin.q));
                assert!(!l.is_fallback(x, y));
            }
        }
    }
}

#[test]
fn hole_falls_back_to_neighbour() {
    let quant = Quantization::symmetric(8, 0.5);
    let mut bins = vec![Bin::default(); quant.len()];
    let reference = TactileImage::filled(3, 1, [0.5; 3]);
    let populated = TactileImage::from_fn(3, 1, |_, _| [0.5 + 0.2, 0.5, 0.5]);
    let probe = TactileImage::from_fn(3, 1, |_, _| [0.5 + 0.2 + 0.125, 0.5, 0.5]);
    let i = quant.index(populated.get(0, 0), [0.5; 3]);
    bins[i] = Bin { p: 0.4, q: -0.3, count: 2 };
    bins[quant.index([0.0; 3], [0.5; 3])] = Bin { p: 9.0, q: 9.0, count: 1 };
    let meta = TableMetadata {
        version: TABLE_VERSION,
        quantization: quant,
        no_contact_tolerance: 0.01,
        gradient_cap: 3.0,
        sphere_radius_mm: 3.0,
        reference_sha256: String::new(),
        presses: 1,
        samples: 3,
        populated_bins: 0,
        coverage: 0.0,
    };
    let table = CalibrationTable::from_parts(meta, bins).unwrap();
    assert_ne!(quant.index(probe.get(0, 0), [0.5; 3]), i);
    let l = lookup_gradients(&probe, &reference, &table).unwrap();
    assert_eq!(l.gradients.get(1, 0), (0.4, -0.3));
    assert!(l.is_fallback(1, 0));
    assert_eq!(l.fallback_distance[1], 1.0);
    assert_eq!(l.diagnostics.fallback_fraction, 1.0);
}

#[test]
fn table_persists_with_sidecar() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.cal");
    f.table.save(&path).unwrap();
    let back = CalibrationTable::load(&path).unwrap();
    assert_eq!(&back, &f.table);
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path.with_extension("json")).unwrap()).unwrap();
    assert_eq!(sidecar["quantization"]["bins"], 32);
    assert_eq!(sidecar["sphere_radius_mm"], 3.0);
    assert!(back.matches_reference(&f.reference));
}
