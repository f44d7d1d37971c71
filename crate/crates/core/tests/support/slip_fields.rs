//! Seeded motion fields with a known answer for slip detection.
//!
//! A marker grid is pressed by a paraboloid indenter and moved by a random
//! rigid transform. In the outlier variant, 20% of the contact markers carry
//! an extra displacement of twice the deviation threshold in a random
//! direction; those markers are the ground-truth slip set.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tactile_core::frame::DepthMap;
use tactile_core::markers::MotionField;
use tactile_core::slip::{contact_region, SlipConfig};

pub const WIDTH: usize = 640;
pub const HEIGHT: usize = 480;

pub struct ConstructedField {
    pub motion: MotionField,
    pub depth: DepthMap,
    /// Reference indices of the markers that must be flagged.
    pub slipping: BTreeSet<usize>,
    /// Reference indices of markers inside the contact region.
    pub contact: BTreeSet<usize>,
    pub rotation: f64,
    pub translation: [f64; 2],
}

pub fn marker_grid() -> Vec<[f64; 2]> {
    let mut pts = Vec::new();
    for r in 0..11 {
        for c in 0..15 {
            pts.push([68.0 + 36.0 * c as f64, 60.0 + 36.0 * r as f64]);
        }
    }
    pts
}

fn paraboloid(center: [f64; 2], radius: f64, peak: f64) -> DepthMap {
    let mut z = vec![0.0; WIDTH * HEIGHT];
    for y in 0..HEIGHT {
        for x in 0..WIDTH {
            let r2 = ((x as f64 - center[0]).powi(2) + (y as f64 - center[1]).powi(2)) / (radius * radius);
            z[y * WIDTH + x] = (peak * (1.0 - r2)).max(0.0);
        }
    }
    DepthMap::new(WIDTH, HEIGHT, z).unwrap()
}

/// Builds field number `seed`; `outliers` selects the slipping variant.
pub fn construct(seed: u64, outliers: bool, cfg: &SlipConfig) -> ConstructedField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rotation = rng.random_range(-5.0f64..5.0).to_radians();
    let translation = [rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0)];
    let center = [rng.random_range(250.0..390.0), rng.random_range(190.0..290.0)];
    let radius = rng.random_range(140.0..180.0);
    let depth = paraboloid(center, radius, 1.0);
    let mask = contact_region(&depth, cfg.depth_threshold);
    // Contact boundary for this paraboloid: z > threshold.
    let contact_radius = radius * (1.0 - cfg.depth_threshold).sqrt();

    let (s, c) = rotation.sin_cos();
    let pivot = [center[0] - translation[0], center[1] - translation[1]];
    let rigid = |p: [f64; 2]| {
        let (dx, dy) = (p[0] - pivot[0], p[1] - pivot[1]);
        [pivot[0] + c * dx - s * dy + translation[0], pivot[1] + s * dx + c * dy + translation[1]]
    };

    let refs = marker_grid();
    let mut curs: Vec<[f64; 2]> = refs.iter().map(|&p| rigid(p)).collect();
    let contact: BTreeSet<usize> = (0..refs.len()).filter(|&i| mask.contains(curs[i][0], curs[i][1])).collect();

    let mut slipping = BTreeSet::new();
    if outliers {
        let extra = 2.0 * cfg.deviation_threshold;
        // Candidates stay inside the contact region after the extra shift.
        let mut candidates: Vec<usize> = contact
            .iter()
            .copied()
            .filter(|&i| (curs[i][0] - center[0]).hypot(curs[i][1] - center[1]) < contact_radius - extra - 3.0)
            .collect();
        let n_out = (0.2 * contact.len() as f64).round() as usize;
        assert!(candidates.len() >= n_out, "seed {seed}: too few interior markers");
        for k in 0..n_out {
            let j = rng.random_range(k..candidates.len());
            candidates.swap(k, j);
        }
        for &i in &candidates[..n_out] {
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            curs[i][0] += extra * a.cos();
            curs[i][1] += extra * a.sin();
            slipping.insert(i);
        }
    }

    // The same motion written as `cur = R ref + t` about the origin.
    let origin_translation = [
        pivot[0] - (c * pivot[0] - s * pivot[1]) + translation[0],
        pivot[1] - (s * pivot[0] + c * pivot[1]) + translation[1],
    ];
    ConstructedField {
        motion: MotionField::from_pairs(refs.into_iter().zip(curs)),
        depth,
        slipping,
        contact,
        rotation,
        translation: origin_translation,
    }
}

/// Precision and recall of flagged reference indices against the truth.
pub fn precision_recall(flagged: &BTreeSet<usize>, truth: &BTreeSet<usize>) -> (f64, f64) {
    let tp = flagged.intersection(truth).count() as f64;
    let precision = if flagged.is_empty() { 1.0 } else { tp / flagged.len() as f64 };
    let recall = if truth.is_empty() { 1.0 } else { tp / truth.len() as f64 };
    (precision, recall)
}
