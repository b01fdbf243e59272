//! Planar convex hulls and set diameters.

use num_complex::Complex64;

#[inline]
fn cross(o: Complex64, a: Complex64, b: Complex64) -> f64 {
    (a.re - o.re) * (b.im - o.im) - (a.im - o.im) * (b.re - o.re)
}

/// Convex hull by Andrew's monotone chain, counter-clockwise, without
/// collinear vertices. Sorts `points` in place.
pub fn convex_hull(points: &mut [Complex64]) -> Vec<Complex64> {
    points.sort_unstable_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let n = points.len();
    if n <= 2 {
        let mut h = points.to_vec();
        h.dedup();
        return h;
    }
    let mut hull: Vec<Complex64> = Vec::with_capacity(2 * n);
    for &p in points.iter() {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in points.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    if hull.len() == 2 && hull[0] == hull[1] {
        hull.pop();
    }
    hull
}

/// Diameter of a convex polygon given counter-clockwise, by rotating calipers.
pub fn hull_diameter(hull: &[Complex64]) -> f64 {
    let m = hull.len();
    match m {
        0 | 1 => return 0.0,
        2 => return (hull[0] - hull[1]).norm(),
        _ => {}
    }
    let mut best: f64 = 0.0;
    let mut j = 1;
    for i in 0..m {
        let a = hull[i];
        let b = hull[(i + 1) % m];
        // Advance the antipodal vertex while the triangle area grows.
        while cross(a, b, hull[(j + 1) % m]).abs() > cross(a, b, hull[j]).abs() {
            j = (j + 1) % m;
        }
        best = best.max((a - hull[j]).norm()).max((b - hull[j]).norm());
    }
    best
}

/// Exact diameter of a planar point set.
pub fn diameter(points: &[Complex64]) -> f64 {
    let mut pts = points.to_vec();
    hull_diameter(&convex_hull(&mut pts))
}

/// Diagonal of the bounding box: between the diameter and `sqrt(2)` times it.
pub fn bounding_box_diameter(points: &[Complex64]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p.re);
        x1 = x1.max(p.re);
        y0 = y0.min(p.im);
        y1 = y1.max(p.im);
    }
    (x1 - x0).hypot(y1 - y0)
}

/// Hull of the union of two hulls.
pub fn merge_hulls(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut pts = Vec::with_capacity(a.len() + b.len());
    pts.extend_from_slice(a);
    pts.extend_from_slice(b);
    convex_hull(&mut pts)
}
