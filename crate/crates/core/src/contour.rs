//! Marching-squares extraction of the zero level set of nodal samples.

use std::collections::HashMap;

use crate::fieldgrid::Grid2D;
use crate::tensor::Point2;

#[derive(Clone, Debug, PartialEq)]
pub struct Polyline {
    pub points: Vec<Point2>,
    pub closed: bool,
}

impl Polyline {
    pub fn length(&self) -> f64 {
        let mut l: f64 = self.points.windows(2).map(|w| w[0].distance(w[1])).sum();
        if self.closed && self.points.len() > 1 {
            l += self.points[self.points.len() - 1].distance(self.points[0]);
        }
        l
    }

    /// Points at arc-length positions `offset + k * stride`, with the
    /// offset at most half a stride (and half the length for short lines).
    pub fn resample(&self, stride: f64) -> Vec<Point2> {
        let mut pts = self.points.clone();
        if self.closed && !pts.is_empty() {
            pts.push(pts[0]);
        }
        if pts.len() < 2 {
            return pts;
        }
        let total = self.length();
        let mut target = (0.5 * stride).min(0.5 * total);
        let mut out = Vec::new();
        let mut acc = 0.0;
        for w in pts.windows(2) {
            let seg = w[0].distance(w[1]);
            while seg > 0.0 && target <= acc + seg && target <= total {
                let t = (target - acc) / seg;
                out.push(w[0] + (w[1] - w[0]) * t);
                target += stride;
            }
            acc += seg;
        }
        out
    }
}

/// Edge identifiers: horizontal edges (i,j)-(i+1,j) are even, vertical
/// edges (i,j)-(i,j+1) odd.
fn h_edge(grid: &Grid2D, i: usize, j: usize) -> usize {
    2 * grid.index(i, j)
}

fn v_edge(grid: &Grid2D, i: usize, j: usize) -> usize {
    2 * grid.index(i, j) + 1
}

fn crossing(pa: Point2, pb: Point2, qa: f64, qb: f64) -> Point2 {
    let t = if qa == qb { 0.5 } else { (qa / (qa - qb)).clamp(0.0, 1.0) };
    pa + (pb - pa) * t
}

/// Zero contours of `values` (row-major, `x1` slow). Cells touching a
/// non-finite sample are skipped. Saddle cells are resolved with the
/// cell-average value.
pub fn zero_contours(grid: &Grid2D, values: &[f64]) -> Vec<Polyline> {
    assert_eq!(values.len(), grid.len());
    let mut points: HashMap<usize, Point2> = HashMap::new();
    let mut segments: Vec<(usize, usize)> = Vec::new();
    for i in 0..grid.n1() - 1 {
        for j in 0..grid.n2() - 1 {
            let idx = [grid.index(i, j), grid.index(i + 1, j), grid.index(i + 1, j + 1), grid.index(i, j + 1)];
            let q = idx.map(|k| values[k]);
            if q.iter().any(|v| !v.is_finite()) {
                continue;
            }
            let pos = [grid.node(i, j), grid.node(i + 1, j), grid.node(i + 1, j + 1), grid.node(i, j + 1)];
            // Edge e joins corners (e, e+1 mod 4).
            let edge_ids = [h_edge(grid, i, j), v_edge(grid, i + 1, j), h_edge(grid, i, j + 1), v_edge(grid, i, j)];
            let pos_sign = q.map(|v| v >= 0.0);
            let mut cut = [false; 4];
            for e in 0..4 {
                let (a, b) = (e, (e + 1) % 4);
                if pos_sign[a] != pos_sign[b] {
                    cut[e] = true;
                    points.entry(edge_ids[e]).or_insert_with(|| {
                        // Order endpoints canonically so shared edges agree bitwise.
                        let (ka, kb) = if idx[a] < idx[b] { (a, b) } else { (b, a) };
                        crossing(pos[ka], pos[kb], q[ka], q[kb])
                    });
                }
            }
            let cuts: Vec<usize> = (0..4).filter(|e| cut[*e]).collect();
            match cuts.len() {
                2 => segments.push((edge_ids[cuts[0]], edge_ids[cuts[1]])),
                4 => {
                    let centre_pos = (q[0] + q[1] + q[2] + q[3]) >= 0.0;
                    // Corners adjacent to edges: corner c touches edges c-1 and c.
                    // Isolate the corners whose sign differs from the centre.
                    for c in 0..4 {
                        if pos_sign[c] != centre_pos {
                            segments.push((edge_ids[(c + 3) % 4], edge_ids[c]));
                        }
                    }
                }
                _ => {}
            }
        }
    }

    let mut by_edge: HashMap<usize, Vec<usize>> = HashMap::new();
    for (s, (a, b)) in segments.iter().enumerate() {
        by_edge.entry(*a).or_default().push(s);
        by_edge.entry(*b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut out = Vec::new();

    let walk = |start_seg: usize, start_edge: usize, used: &mut Vec<bool>| -> (Vec<usize>, bool) {
        let mut chain = vec![start_edge];
        let mut seg = start_seg;
        let mut edge = start_edge;
        loop {
            used[seg] = true;
            let (a, b) = segments[seg];
            let next_edge = if a == edge { b } else { a };
            if next_edge == chain[0] {
                return (chain, true);
            }
            chain.push(next_edge);
            edge = next_edge;
            match by_edge[&edge].iter().find(|s| !used[**s]) {
                Some(s) => seg = *s,
                None => return (chain, false),
            }
        }
    };

    // Open chains first, started from their dangling ends.
    for s in 0..segments.len() {
        if used[s] {
            continue;
        }
        for end in [segments[s].0, segments[s].1] {
            if !used[s] && by_edge[&end].len() == 1 {
                let (chain, closed) = walk(s, end, &mut used);
                out.push(Polyline { points: chain.iter().map(|e| points[e]).collect(), closed });
            }
        }
    }
    for s in 0..segments.len() {
        if !used[s] {
            let (chain, closed) = walk(s, segments[s].0, &mut used);
            out.push(Polyline { points: chain.iter().map(|e| points[e]).collect(), closed });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Vec2;

    #[test]
    fn circle_is_one_closed_loop() {
        let grid = Grid2D::new(-2.0, 2.0, -2.0, 2.0, 41, 41).unwrap();
        let vals: Vec<f64> = (0..grid.len()).map(|k| grid.node_at(k).norm() - 1.0).collect();
        let lines = zero_contours(&grid, &vals);
        assert_eq!(lines.len(), 1);
        assert!(lines[0].closed);
        let l = lines[0].length();
        assert!((l - 2.0 * std::f64::consts::PI).abs() < 0.05, "{l}");
        for p in &lines[0].points {
            assert!((p.norm() - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn vertical_lines_are_open() {
        let grid = Grid2D::new(-1.0, 1.0, -1.0, 1.0, 21, 21).unwrap();
        let vals: Vec<f64> = (0..grid.len()).map(|k| grid.node_at(k).x.powi(2) - 0.25 + 0.0123).collect();
        let lines = zero_contours(&grid, &vals);
        assert_eq!(lines.len(), 2);
        assert!(lines.iter().all(|l| !l.closed));
    }

    #[test]
    fn empty_level_set() {
        let grid = Grid2D::new(0.0, 1.0, 0.0, 1.0, 5, 5).unwrap();
        assert!(zero_contours(&grid, &[1.0; 25]).is_empty());
    }

    #[test]
    fn nan_cells_are_skipped() {
        let grid = Grid2D::new(-1.0, 1.0, -1.0, 1.0, 11, 11).unwrap();
        let mut vals: Vec<f64> = (0..grid.len()).map(|k| grid.node_at(k).x - 0.05).collect();
        vals[grid.index(5, 5)] = f64::NAN;
        let lines = zero_contours(&grid, &vals);
        assert_eq!(lines.len(), 2);
    }

    #[test]
    fn resample_spacing() {
        let line = Polyline { points: vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)], closed: false };
        let pts = line.resample(0.25);
        assert_eq!(pts.len(), 4);
        assert!((pts[0].x - 0.125).abs() < 1e-15 && (pts[3].x - 0.875).abs() < 1e-15);
    }
}
