//! Closest-point queries against triangles and segments.

use super::{Point3, Triangle};

/// Closest point of the closed segment [a, b] to `p`.
pub fn closest_point_on_segment(p: Point3, a: Point3, b: Point3) -> Point3 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return a;
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    a + ab * t
}

/// Closest point of the closed triangle to `p`.
///
/// Degenerate (collinear or coincident) vertices fall back to the closest
/// point of the segment/point hull, so the function is total on finite
/// inputs. The region walk follows Ericson, "Real-Time Collision
/// Detection", 5.1.5.
pub fn closest_point_on_triangle(p: Point3, tri: &Triangle) -> Point3 {
    let (a, b, c) = (tri.a, tri.b, tri.c);
    let ab = b - a;
    let ac = c - a;

    // Relative degeneracy test: sin^2 of the vertex angle below 1e-24
    // means the vertices are numerically collinear.
    let cross = ab.cross(ac);
    if cross.norm_sq() <= 1e-24 * ab.norm_sq() * ac.norm_sq() {
        let candidates = [
            closest_point_on_segment(p, a, b),
            closest_point_on_segment(p, b, c),
            closest_point_on_segment(p, c, a),
        ];
        let mut best = candidates[0];
        for &cand in &candidates[1..] {
            if p.dist_sq(cand) < p.dist_sq(best) {
                best = cand;
            }
        }
        return best;
    }

    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }

    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }

    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }

    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Barycentric coordinates of `q` with respect to the triangle's plane.
pub fn barycentric(q: Point3, tri: &Triangle) -> (f64, f64, f64) {
    let v0 = tri.b - tri.a;
    let v1 = tri.c - tri.a;
    let v2 = q - tri.a;
    let d00 = v0.dot(v0);
    let d01 = v0.dot(v1);
    let d11 = v1.dot(v1);
    let d20 = v2.dot(v0);
    let d21 = v2.dot(v1);
    let denom = d00 * d11 - d01 * d01;
    if denom == 0.0 {
        return (1.0, 0.0, 0.0);
    }
    let v = (d11 * d20 - d01 * d21) / denom;
    let w = (d00 * d21 - d01 * d20) / denom;
    (1.0 - v - w, v, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    /// Independent oracle: dense barycentric grid followed by local window
    /// refinement, evaluating only points of the closed triangle.
    pub fn barycentric_scan_closest(p: Point3, tri: &Triangle, grid: usize) -> Point3 {
        let eval = |u: f64, v: f64| -> Point3 {
            tri.a + (tri.b - tri.a) * u + (tri.c - tri.a) * v
        };
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=grid {
            for j in 0..=(grid - i) {
                let u = i as f64 / grid as f64;
                let v = j as f64 / grid as f64;
                let d = p.dist_sq(eval(u, v));
                if d < best.0 {
                    best = (d, u, v);
                }
            }
        }
        let mut window = 1.0 / grid as f64;
        for _ in 0..40 {
            let (_, cu, cv) = best;
            for i in -5i32..=5 {
                for j in -5i32..=5 {
                    let u = (cu + i as f64 * window / 5.0).clamp(0.0, 1.0);
                    let v = (cv + j as f64 * window / 5.0).clamp(0.0, 1.0 - u);
                    let d = p.dist_sq(eval(u, v));
                    if d < best.0 {
                        best = (d, u, v);
                    }
                }
            }
            window *= 0.5;
        }
        eval(best.1, best.2)
    }

    fn unit_tri() -> Triangle {
        Triangle::new(
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        )
    }

    #[test]
    fn orthogonal_projection_hits_vertex() {
        let q = closest_point_on_triangle(Point3::new(0.0, 0.0, 1.0), &unit_tri());
        assert_eq!(q, Point3::new(0.0, 0.0, 0.0));
    }

    #[test]
    fn interior_point_projects_to_itself() {
        let p = Point3::new(0.2, 0.2, 0.0);
        assert!(closest_point_on_triangle(p, &unit_tri()).dist(p) < 1e-15);
    }

    #[test]
    fn far_corner_clamps_to_hypotenuse_midpoint() {
        let q = closest_point_on_triangle(Point3::new(2.0, 2.0, 0.0), &unit_tri());
        assert!(q.dist(Point3::new(0.5, 0.5, 0.0)) < 1e-12);
        let oracle = barycentric_scan_closest(Point3::new(2.0, 2.0, 0.0), &unit_tri(), 140);
        assert!(q.dist(oracle) < 1e-9);
    }

    #[test]
    fn matches_dense_scan_on_random_pairs() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let rand_pt = |rng: &mut ChaCha12Rng| {
            Point3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            )
        };
        for _ in 0..200 {
            let tri = Triangle::new(rand_pt(&mut rng), rand_pt(&mut rng), rand_pt(&mut rng));
            let p = rand_pt(&mut rng);
            let fast = closest_point_on_triangle(p, &tri);
            let slow = barycentric_scan_closest(p, &tri, 140);
            assert!(
                (p.dist(fast) - p.dist(slow)).abs() < 1e-9,
                "fast {} slow {}",
                p.dist(fast),
                p.dist(slow)
            );
            // Result lies inside the closed triangle.
            let (u, v, w) = barycentric(fast, &tri);
            for coord in [u, v, w] {
                assert!((-1e-9..=1.0 + 1e-9).contains(&coord));
            }
        }
    }

    #[test]
    fn degenerate_collinear_falls_back_to_segment() {
        let tri = Triangle::new(
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(2.0, 0.0, 0.0),
        );
        let q = closest_point_on_triangle(Point3::new(1.5, 1.0, 0.0), &tri);
        assert!(q.dist(Point3::new(1.5, 0.0, 0.0)) < 1e-12);
    }

    #[test]
    fn degenerate_point_triangle() {
        let v = Point3::new(0.3, -0.4, 0.9);
        let tri = Triangle::new(v, v, v);
        let q = closest_point_on_triangle(Point3::new(5.0, 5.0, 5.0), &tri);
        assert_eq!(q, v);
    }
}
