//! Marker-field tracking between a reference frame and the current frame.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distortion::MarkerSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackError {
    #[error("reference marker set is empty")]
    EmptyReference,
    #[error("max displacement must be positive, got {0}")]
    InvalidMaxDisplacement(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub ref_index: usize,
    pub cur_index: usize,
    pub ref_pos: [f64; 2],
    pub cur_pos: [f64; 2],
    pub displacement: [f64; 2],
}

/// Matched marker pairs plus the markers left without a partner.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MotionField {
    pub correspondences: Vec<Correspondence>,
    pub unmatched_ref: Vec<usize>,
    pub unmatched_cur: Vec<usize>,
}

impl MotionField {
    /// Builds a field directly from `(ref, cur)` position pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = ([f64; 2], [f64; 2])>) -> Self {
        let correspondences = pairs
            .into_iter()
            .enumerate()
            .map(|(i, (r, c))| Correspondence {
                ref_index: i,
                cur_index: i,
                ref_pos: r,
                cur_pos: c,
                displacement: [c[0] - r[0], c[1] - r[1]],
            })
            .collect();
        Self {
            correspondences,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.correspondences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.correspondences.is_empty()
    }

    pub fn total_squared_displacement(&self) -> f64 {
        self.correspondences
            .iter()
            .map(|c| c.displacement[0].powi(2) + c.displacement[1].powi(2))
            .sum()
    }

    /// CSV with columns `ref_x,ref_y,cur_x,cur_y,dx,dy`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["ref_x", "ref_y", "cur_x", "cur_y", "dx", "dy"])?;
        for c in &self.correspondences {
            w.serialize((
                c.ref_pos[0],
                c.ref_pos[1],
                c.cur_pos[0],
                c.cur_pos[1],
                c.displacement[0],
                c.displacement[1],
            ))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Globally optimal one-to-one matching of `current` to `reference`.
///
/// Among pairs within `max_displacement`, the matching first maximizes the
/// number of pairs and then minimizes the total squared displacement.
/// Markers that cannot be paired are reported, never guessed.
pub fn track(
    reference: &MarkerSet,
    current: &MarkerSet,
    max_displacement: f64,
) -> Result<MotionField, TrackError> {
    if reference.is_empty() {
        return Err(TrackError::EmptyReference);
    }
    if !(max_displacement > 0.0) {
        return Err(TrackError::InvalidMaxDisplacement(max_displacement));
    }
    let refs = reference.positions();
    let curs = current.positions();
    if curs.is_empty() {
        return Ok(MotionField {
            correspondences: Vec::new(),
            unmatched_ref: (0..refs.len()).collect(),
            unmatched_cur: Vec::new(),
        });
    }

    let max2 = max_displacement * max_displacement;
    // Any feasible pair is cheaper than one infeasible pair, so cardinality
    // is maximized before displacement is minimized.
    let forbidden = max2 * (refs.len().min(curs.len()) as f64 + 1.0) + 1.0;
    let cost = |r: &[f64; 2], c: &[f64; 2]| {
        let d2 = (c[0] - r[0]).powi(2) + (c[1] - r[1]).powi(2);
        if d2 <= max2 {
            d2
        } else {
            forbidden
        }
    };

    let transpose = refs.len() > curs.len();
    let (rows, cols) = if transpose { (&curs, &refs) } else { (&refs, &curs) };
    let matrix: Vec<Vec<f64>> = rows
        .iter()
        .map(|a| {
            cols.iter()
                .map(|b| if transpose { cost(b, a) } else { cost(a, b) })
                .collect()
        })
        .collect();
    let assignment = min_cost_assignment(&matrix);

    let mut ref_used = vec![false; refs.len()];
    let mut cur_used = vec![false; curs.len()];
    let mut correspondences = Vec::new();
    for (row, &col) in assignment.iter().enumerate() {
        let (ri, ci) = if transpose { (col, row) } else { (row, col) };
        let (r, c) = (refs[ri], curs[ci]);
        if cost(&r, &c) >= forbidden {
            continue;
        }
        ref_used[ri] = true;
        cur_used[ci] = true;
        correspondences.push(Correspondence {
            ref_index: ri,
            cur_index: ci,
            ref_pos: r,
            cur_pos: c,
            displacement: [c[0] - r[0], c[1] - r[1]],
        });
    }
    correspondences.sort_by_key(|c| c.ref_index);
    Ok(MotionField {
        correspondences,
        unmatched_ref: (0..refs.len()).filter(|&i| !ref_used[i]).collect(),
        unmatched_cur: (0..curs.len()).filter(|&i| !cur_used[i]).collect(),
    })
}

/// Shortest-augmenting-path Hungarian method for a rectangular cost matrix
/// with `rows <= cols`. Returns the column assigned to each row.
pub(crate) fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "assignment needs rows <= cols");
    let inf = f64::INFINITY;
    // 1-based potentials; column 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut result = vec![0; n];
    for j in 1..=m {
        if owner[j] != 0 {
            result[owner[j] - 1] = j - 1;
        }
    }
    result
}
