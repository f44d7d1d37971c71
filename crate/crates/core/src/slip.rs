//! Incipient-slip detection.
//!
//! While the contact patch sticks to the object it moves rigidly. The marker
//! motion inside the contact region is compared against its best rigid fit,
//! and markers whose real motion departs from the rigid estimate are flagged.

use serde::{Deserialize, Serialize};

use crate::frame::{DepthMap, Mask};
use crate::markers::MotionField;
use crate::morph;

/// Contact pixels: `z > depth_threshold`, largest 8-connected component,
/// closed with a disk of radius 3 px.
pub fn contact_region(depth: &DepthMap, depth_threshold: f64) -> Mask {
    let bits = depth.values().iter().map(|&z| z > depth_threshold).collect();
    let raw = Mask::new(depth.width(), depth.height(), bits).expect("depth dims");
    if raw.is_empty() {
        return raw;
    }
    morph::close(&morph::largest_component(&raw), 3)
}

/// 2D rotation + translation mapping reference positions onto current ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform2D {
    /// Radians in `(-π, π]`.
    pub rotation: f64,
    pub translation: [f64; 2],
    /// RMS fit residual, px.
    pub residual: f64,
}

impl RigidTransform2D {
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.rotation.sin_cos();
        [
            c * p[0] - s * p[1] + self.translation[0],
            s * p[0] + c * p[1] + self.translation[1],
        ]
    }
}

/// Least-squares rigid fit of `cur ≈ R·ref + t` (orthogonal Procrustes on
/// centered coordinates). `None` with fewer than two pairs.
pub fn fit_rigid_pairs(pairs: &[([f64; 2], [f64; 2])]) -> Option<RigidTransform2D> {
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let (mut ca, mut cb) = ([0.0; 2], [0.0; 2]);
    for (a, b) in pairs {
        ca[0] += a[0] / n;
        ca[1] += a[1] / n;
        cb[0] += b[0] / n;
        cb[1] += b[1] / n;
    }
    let (mut dot, mut cross) = (0.0, 0.0);
    for (a, b) in pairs {
        let (ax, ay) = (a[0] - ca[0], a[1] - ca[1]);
        let (bx, by) = (b[0] - cb[0], b[1] - cb[1]);
        dot += ax * bx + ay * by;
        cross += ax * by - ay * bx;
    }
    let mut rotation = cross.atan2(dot);
    if rotation <= -std::f64::consts::PI {
        rotation = std::f64::consts::PI;
    }
    let (s, c) = rotation.sin_cos();
    let translation = [cb[0] - (c * ca[0] - s * ca[1]), cb[1] - (s * ca[0] + c * ca[1])];
    let mut t = RigidTransform2D {
        rotation,
        translation,
        residual: 0.0,
    };
    let ss: f64 = pairs
        .iter()
        .map(|(a, b)| {
            let e = t.apply(*a);
            (e[0] - b[0]).powi(2) + (e[1] - b[1]).powi(2)
        })
        .sum();
    t.residual = (ss / n).sqrt();
    Some(t)
}

/// Rigid fit over the correspondences whose current position lies in `mask`.
pub fn fit_rigid(motion: &MotionField, mask: &Mask) -> Option<RigidTransform2D> {
    let pairs: Vec<_> = motion
        .correspondences
        .iter()
        .filter(|c| mask.contains(c.cur_pos[0], c.cur_pos[1]))
        .map(|c| (c.ref_pos, c.cur_pos))
        .collect();
    fit_rigid_pairs(&pairs)
}

/// Trimmed rigid fit: after the plain least-squares fit, markers with
/// residuals above 2.5 robust standard deviations (MAD scale, floored at
/// 1e-6 px) are dropped and the fit is repeated until the inlier set is
/// stable. The gate does not depend on any slip threshold.
pub fn fit_rigid_trimmed(pairs: &[([f64; 2], [f64; 2])]) -> Option<RigidTransform2D> {
    let mut fit = fit_rigid_pairs(pairs)?;
    let mut inliers: Vec<bool> = vec![true; pairs.len()];
    for _ in 0..10 {
        let res: Vec<f64> = pairs
            .iter()
            .map(|(a, b)| {
                let e = fit.apply(*a);
                (e[0] - b[0]).hypot(e[1] - b[1])
            })
            .collect();
        let mut sorted = res.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        let gate = (2.5 * 1.4826 * median).max(1e-6);
        let next: Vec<bool> = res.iter().map(|&r| r <= gate).collect();
        if next == inliers {
            break;
        }
        let subset: Vec<_> = pairs
            .iter()
            .zip(&next)
            .filter(|(_, &k)| k)
            .map(|(p, _)| *p)
            .collect();
        match fit_rigid_pairs(&subset) {
            Some(f) => fit = f,
            None => break,
        }
        inliers = next;
    }
    Some(fit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlipConfig {
    /// Contact threshold on depth, mm.
    pub depth_threshold: f64,
    /// Per-marker deviation that counts as slipping, px.
    pub deviation_threshold: f64,
    /// Flagged fraction of contact markers above which slip is declared.
    pub trigger_fraction: f64,
}

impl Default for SlipConfig {
    fn default() -> Self {
        Self {
            depth_threshold: 0.2,
            deviation_threshold: 1.0,
            trigger_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactState {
    NoContact,
    Stiction,
    IncipientSlip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerDeviation {
    pub ref_index: usize,
    pub ref_pos: [f64; 2],
    pub cur_pos: [f64; 2],
    /// Position predicted by the rigid estimate.
    pub estimated_pos: [f64; 2],
    pub deviation: f64,
    pub slipping: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlipReport {
    pub state: ContactState,
    /// Fraction of contact markers flagged, in `[0, 1]`.
    pub score: f64,
    pub contact_area_px: usize,
    pub transform: Option<RigidTransform2D>,
    pub markers: Vec<MarkerDeviation>,
    #[serde(skip)]
    pub contact: Mask,
}

impl SlipReport {
    pub fn flagged(&self) -> impl Iterator<Item = &MarkerDeviation> {
        self.markers.iter().filter(|m| m.slipping)
    }
}

/// Classifies the contact from the tracked motion and reconstructed depth.
pub fn detect_slip(motion: &MotionField, depth: &DepthMap, cfg: &SlipConfig) -> SlipReport {
    let contact = contact_region(depth, cfg.depth_threshold);
    detect_slip_in(motion, contact, cfg)
}

/// As [`detect_slip`] with a precomputed contact mask.
pub fn detect_slip_in(motion: &MotionField, contact: Mask, cfg: &SlipConfig) -> SlipReport {
    let mut in_contact: Vec<_> = motion
        .correspondences
        .iter()
        .filter(|c| contact.contains(c.cur_pos[0], c.cur_pos[1]))
        .collect();
    // Canonical order keeps the fit independent of correspondence order.
    in_contact.sort_by(|a, b| {
        a.ref_pos[0]
            .total_cmp(&b.ref_pos[0])
            .then(a.ref_pos[1].total_cmp(&b.ref_pos[1]))
            .then(a.cur_pos[0].total_cmp(&b.cur_pos[0]))
            .then(a.cur_pos[1].total_cmp(&b.cur_pos[1]))
    });
    let pairs: Vec<_> = in_contact.iter().map(|c| (c.ref_pos, c.cur_pos)).collect();
    let contact_area_px = contact.count();
    let Some(fit) = fit_rigid_trimmed(&pairs) else {
        return SlipReport {
            state: ContactState::NoContact,
            score: 0.0,
            contact_area_px,
            transform: None,
            markers: Vec::new(),
            contact,
        };
    };
    let mut markers: Vec<MarkerDeviation> = in_contact
        .iter()
        .map(|c| {
            let est = fit.apply(c.ref_pos);
            let deviation = (est[0] - c.cur_pos[0]).hypot(est[1] - c.cur_pos[1]);
            MarkerDeviation {
                ref_index: c.ref_index,
                ref_pos: c.ref_pos,
                cur_pos: c.cur_pos,
                estimated_pos: est,
                deviation,
                slipping: deviation > cfg.deviation_threshold,
            }
        })
        .collect();
    markers.sort_by_key(|m| m.ref_index);
    let flagged = markers.iter().filter(|m| m.slipping).count();
    let score = flagged as f64 / markers.len() as f64;
    let state = if score > cfg.trigger_fraction {
        ContactState::IncipientSlip
    } else {
        ContactState::Stiction
    };
    SlipReport {
        state,
        score,
        contact_area_px,
        transform: Some(fit),
        markers,
        contact,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring_points(n: usize, radius: f64, center: [f64; 2]) -> Vec<[f64; 2]> {
        (0..n)
            .map(|i| {
                let a = i as f64 * 2.4;
                let r = radius * ((i % 5) as f64 + 1.0) / 5.0;
                [center[0] + r * a.cos(), center[1] + r * a.sin()]
            })
            .collect()
    }

    fn full_mask(w: usize, h: usize) -> Mask {
        Mask::new(w, h, vec![true; w * h]).unwrap()
    }

    #[test]
    fn zero_depth_has_empty_contact() {
        assert!(contact_region(&DepthMap::zeros(30, 20), 0.2).is_empty());
    }

    #[test]
    fn translation_fit() {
        let pts = ring_points(12, 20.0, [50.0, 40.0]);
        let motion = MotionField::from_pairs(pts.iter().map(|p| (*p, [p[0] + 3.0, p[1] - 1.0])));
        let t = fit_rigid(&motion, &full_mask(100, 80)).unwrap();
        assert!(t.rotation.abs() < 1e-12);
        assert!((t.translation[0] - 3.0).abs() < 1e-9 && (t.translation[1] + 1.0).abs() < 1e-9);
        assert!(t.residual < 1e-9);
    }

    #[test]
    fn rotation_about_centroid() {
        let pts = ring_points(12, 20.0, [50.0, 40.0]);
        let n = pts.len() as f64;
        let c = [pts.iter().map(|p| p[0]).sum::<f64>() / n, pts.iter().map(|p| p[1]).sum::<f64>() / n];
        let a = 5f64.to_radians();
        let motion = MotionField::from_pairs(pts.iter().map(|p| {
            let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
            (*p, [c[0] + a.cos() * dx - a.sin() * dy, c[1] + a.sin() * dx + a.cos() * dy])
        }));
        let t = fit_rigid(&motion, &full_mask(100, 80)).unwrap();
        assert!((t.rotation - a).abs() < 1e-6 * std::f64::consts::PI / 180.0 + 1e-12);
        assert!(t.residual < 1e-9);
    }

    #[test]
    fn fewer_than_two_markers_is_no_fit() {
        let motion = MotionField::from_pairs([([1.0, 1.0], [2.0, 2.0])]);
        assert!(fit_rigid(&motion, &full_mask(10, 10)).is_none());
    }

    #[test]
    fn empty_contact_is_no_contact() {
        let pts = ring_points(12, 20.0, [50.0, 40.0]);
        let motion = MotionField::from_pairs(pts.iter().map(|p| (*p, *p)));
        let r = detect_slip(&motion, &DepthMap::zeros(100, 80), &SlipConfig::default());
        assert_eq!(r.state, ContactState::NoContact);
        assert_eq!(r.score, 0.0);
    }

    #[test]
    fn pure_translation_is_stiction() {
        let pts = ring_points(20, 20.0, [50.0, 40.0]);
        let motion = MotionField::from_pairs(pts.iter().map(|p| (*p, [p[0] + 2.0, p[1] + 0.5])));
        let r = detect_slip_in(&motion, full_mask(100, 80), &SlipConfig::default());
        assert_eq!(r.state, ContactState::Stiction);
        assert_eq!(r.flagged().count(), 0);
    }
}
