//! Binary morphology and connected-component labelling on [`Mask`]s.

use crate::frame::Mask;

/// A connected set of mask pixels (linear indices, row-major).
#[derive(Debug, Clone)]
pub struct Component {
    pub pixels: Vec<usize>,
}

/// 8-connected components in row-major order of their first pixel.
pub fn components(mask: &Mask) -> Vec<Component> {
    let (w, h) = (mask.width(), mask.height());
    let bits = mask.bits();
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(i) = stack.pop() {
            pixels.push(i);
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if bits[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        pixels.sort_unstable();
        out.push(Component { pixels });
    }
    out
}

/// Keeps only the largest 8-connected component (ties: first in row-major order).
pub fn largest_component(mask: &Mask) -> Mask {
    let mut best: Option<Component> = None;
    for c in components(mask) {
        if best.as_ref().is_none_or(|b| c.pixels.len() > b.pixels.len()) {
            best = Some(c);
        }
    }
    let mut out = Mask::empty(mask.width(), mask.height());
    if let Some(c) = best {
        for i in c.pixels {
            out.set(i % mask.width(), i / mask.width(), true);
        }
    }
    out
}

fn disk_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut v = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                v.push((dx, dy));
            }
        }
    }
    v
}

pub fn dilate(mask: &Mask, radius: usize) -> Mask {
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    let offsets = disk_offsets(radius);
    let mut out = Mask::empty(mask.width(), mask.height());
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x as usize, y as usize) {
                continue;
            }
            for &(dx, dy) in &offsets {
                let (nx, ny) = (x + dx, y + dy);
                if nx >= 0 && ny >= 0 && nx < w && ny < h {
                    out.set(nx as usize, ny as usize, true);
                }
            }
        }
    }
    out
}

/// Erosion with the outside of the frame treated as set, so that closing
/// never removes pixels at the frame border.
pub fn erode(mask: &Mask, radius: usize) -> Mask {
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    let offsets = disk_offsets(radius);
    let mut out = Mask::empty(mask.width(), mask.height());
    let Some((x0, y0, x1, y1)) = mask.bounding_box() else {
        return out;
    };
    for y in y0 as isize..=y1 as isize {
        for x in x0 as isize..=x1 as isize {
            let keep = offsets.iter().all(|&(dx, dy)| {
                let (nx, ny) = (x + dx, y + dy);
                nx < 0 || ny < 0 || nx >= w || ny >= h || mask.get(nx as usize, ny as usize)
            });
            if keep {
                out.set(x as usize, y as usize, true);
            }
        }
    }
    out
}

/// Morphological closing with a disk of the given radius.
pub fn close(mask: &Mask, radius: usize) -> Mask {
    erode(&dilate(mask, radius), radius)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(rows: &[&str]) -> Mask {
        let h = rows.len();
        let w = rows[0].len();
        let bits = rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect();
        Mask::new(w, h, bits).unwrap()
    }

    #[test]
    fn labels_diagonal_neighbors_together() {
        let m = mask_from(&["#...", ".#..", "...#", "...#"]);
        let cs = components(&m);
        assert_eq!(cs.len(), 2);
        assert_eq!(cs[0].pixels.len(), 2);
    }

    #[test]
    fn largest_component_wins() {
        let m = mask_from(&["##..#", "##...", ".....", "....#"]);
        let l = largest_component(&m);
        assert_eq!(l.count(), 4);
        assert!(!l.get(4, 0));
    }

    #[test]
    fn closing_fills_small_hole_and_keeps_convex_shape() {
        let mut m = Mask::empty(21, 21);
        for y in 0..21 {
            for x in 0..21 {
                let (dx, dy) = (x as f64 - 10.0, y as f64 - 10.0);
                if dx * dx + dy * dy <= 36.0 {
                    m.set(x, y, true);
                }
            }
        }
        let disk = m.clone();
        m.set(10, 10, false);
        let closed = close(&m, 3);
        assert_eq!(closed, disk);
    }
}
