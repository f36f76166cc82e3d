//! Polyline and polygon utilities shared by the orbit search and the
//! vortex grouping.

use crate::tensor::{Point2, Vec2};

/// Signed shoelace area; positive for counterclockwise vertex order. The
/// polygon is closed implicitly.
pub fn signed_area(pts: &[Point2]) -> f64 {
    if pts.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..pts.len() {
        let a = pts[i];
        let b = pts[(i + 1) % pts.len()];
        acc += a.cross(b);
    }
    0.5 * acc
}

/// Area centroid, falling back to the vertex mean for degenerate polygons.
pub fn centroid(pts: &[Point2]) -> Point2 {
    let a = signed_area(pts);
    if a.abs() < 1e-300 || pts.len() < 3 {
        let n = pts.len().max(1) as f64;
        return pts.iter().fold(Vec2::ZERO, |s, p| s + *p) * (1.0 / n);
    }
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..pts.len() {
        let p = pts[i];
        let q = pts[(i + 1) % pts.len()];
        let w = p.cross(q);
        cx += (p.x + q.x) * w;
        cy += (p.y + q.y) * w;
    }
    Vec2::new(cx / (6.0 * a), cy / (6.0 * a))
}

/// Even–odd point-in-polygon test.
pub fn contains_point(poly: &[Point2], p: Point2) -> bool {
    let mut inside = false;
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b - a).cross(c - a)
}

/// Proper or touching intersection of segments `ab` and `cd`.
pub fn segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |p: Point2, q: Point2, r: Point2| {
        r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
    };
    (d1 == 0.0 && on(c, d, a)) || (d2 == 0.0 && on(c, d, b)) || (d3 == 0.0 && on(a, b, c)) || (d4 == 0.0 && on(a, b, d))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub min: Point2,
    pub max: Point2,
}

impl BoundingBox {
    pub fn of(pts: &[Point2]) -> Self {
        let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in pts {
            min = Vec2::new(min.x.min(p.x), min.y.min(p.y));
            max = Vec2::new(max.x.max(p.x), max.y.max(p.y));
        }
        BoundingBox { min, max }
    }

    pub fn overlaps(&self, o: &BoundingBox) -> bool {
        self.min.x <= o.max.x && o.min.x <= self.max.x && self.min.y <= o.max.y && o.min.y <= self.max.y
    }

    /// A lower bound on the Hausdorff distance between the enclosed sets.
    pub fn hausdorff_lower_bound(&self, o: &BoundingBox) -> f64 {
        [
            (self.min.x - o.min.x).abs(),
            (self.max.x - o.max.x).abs(),
            (self.min.y - o.min.y).abs(),
            (self.max.y - o.max.y).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Number of segment pairs at which two closed polylines cross.
pub fn closed_polyline_intersections(a: &[Point2], b: &[Point2]) -> usize {
    if a.len() < 2 || b.len() < 2 || !BoundingBox::of(a).overlaps(&BoundingBox::of(b)) {
        return 0;
    }
    let mut count = 0;
    for i in 0..a.len() {
        let (p, q) = (a[i], a[(i + 1) % a.len()]);
        let sa = BoundingBox::of(&[p, q]);
        for j in 0..b.len() {
            let (r, s) = (b[j], b[(j + 1) % b.len()]);
            if sa.overlaps(&BoundingBox::of(&[r, s])) && segments_intersect(p, q, r, s) {
                count += 1;
            }
        }
    }
    count
}

pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

fn directed_hausdorff(a: &[Point2], b: &[Point2], closed: bool) -> f64 {
    let segs = if closed { b.len() } else { b.len().saturating_sub(1) };
    let mut worst: f64 = 0.0;
    for p in a {
        let mut best = f64::INFINITY;
        if segs == 0 {
            best = b.first().map_or(f64::INFINITY, |q| p.distance(*q));
        }
        for j in 0..segs {
            best = best.min(point_segment_distance(*p, b[j], b[(j + 1) % b.len()]));
            if best <= worst {
                break;
            }
        }
        worst = worst.max(best);
    }
    worst
}

/// Symmetric Hausdorff distance between two closed polylines, measured
/// from vertices to the other curve's segments.
pub fn hausdorff(a: &[Point2], b: &[Point2]) -> f64 {
    directed_hausdorff(a, b, true).max(directed_hausdorff(b, a, true))
}

/// True if the closed polyline has any pair of non-adjacent crossing
/// segments.
pub fn self_intersects(pts: &[Point2]) -> bool {
    let n = pts.len();
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (c, d) = (pts[j], pts[(j + 1) % n]);
            if segments_intersect(a, b, c, d) {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(c: Point2, r: f64, n: usize) -> Vec<Point2> {
        (0..n)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                c + Vec2::new(r * t.cos(), r * t.sin())
            })
            .collect()
    }

    #[test]
    fn square_area_and_centroid() {
        let sq = vec![Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(2.0, 1.0), Vec2::new(0.0, 1.0)];
        assert_eq!(signed_area(&sq), 2.0);
        assert_eq!(centroid(&sq), Vec2::new(1.0, 0.5));
        assert!(contains_point(&sq, Vec2::new(1.5, 0.5)));
        assert!(!contains_point(&sq, Vec2::new(2.5, 0.5)));
    }

    #[test]
    fn crossing_circles() {
        let a = circle(Vec2::ZERO, 1.0, 64);
        let b = circle(Vec2::new(1.0, 0.0), 1.0, 64);
        let c = circle(Vec2::ZERO, 0.5, 64);
        assert_eq!(closed_polyline_intersections(&a, &b), 2);
        assert_eq!(closed_polyline_intersections(&a, &c), 0);
        assert!(!self_intersects(&a));
    }

    #[test]
    fn hausdorff_of_concentric_circles() {
        let a = circle(Vec2::ZERO, 1.0, 400);
        let b = circle(Vec2::ZERO, 1.1, 400);
        let h = hausdorff(&a, &b);
        assert!((h - 0.1).abs() < 1e-3);
        assert!(BoundingBox::of(&a).hausdorff_lower_bound(&BoundingBox::of(&b)) <= h + 1e-12);
    }

    #[test]
    fn figure_eight_self_intersects() {
        let pts = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];
        assert!(self_intersects(&pts));
    }
}
