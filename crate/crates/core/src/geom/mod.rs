//! Foundational geometric types and queries: points, clouds, normalization
//! frames, triangles, exact k-nearest-neighbor search.

mod knn;
mod rotation;
mod triangle;

pub use knn::{brute_force_knn, KnnIndex};
pub use rotation::{rotation_to_target, TARGET_DIRECTION};
pub use triangle::{barycentric, closest_point_on_segment, closest_point_on_triangle};

use crate::error::{Error, Result};

/// A 3D point (also used for directions and offsets). Coordinates are
/// unitless; the pipeline works in a canonical space where the cloud's
/// longest bounding-box edge is 1.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ZERO: Point3 = Point3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn dot(self, other: Point3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Point3) -> Point3 {
        Point3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist(self, other: Point3) -> f64 {
        (self - other).norm()
    }

    pub fn dist_sq(self, other: Point3) -> f64 {
        (self - other).norm_sq()
    }

    /// Unit vector in the same direction; `None` for the zero vector.
    pub fn normalized(self) -> Option<Point3> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            None
        } else {
            Some(self / n)
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn min_components(self, other: Point3) -> Point3 {
        Point3::new(
            self.x.min(other.x),
            self.y.min(other.y),
            self.z.min(other.z),
        )
    }

    pub fn max_components(self, other: Point3) -> Point3 {
        Point3::new(
            self.x.max(other.x),
            self.y.max(other.y),
            self.z.max(other.z),
        )
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }
}

impl std::ops::Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl std::ops::Div<f64> for Point3 {
    type Output = Point3;
    fn div(self, s: f64) -> Point3 {
        Point3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl std::ops::Neg for Point3 {
    type Output = Point3;
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

/// Row-major 3x3 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3 {
    pub rows: [[f64; 3]; 3],
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3 {
        rows: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn from_rows(r0: [f64; 3], r1: [f64; 3], r2: [f64; 3]) -> Self {
        Mat3 { rows: [r0, r1, r2] }
    }

    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        Mat3::from_rows([a, 0.0, 0.0], [0.0, b, 0.0], [0.0, 0.0, c])
    }

    pub fn mul_vec(&self, v: Point3) -> Point3 {
        let r = &self.rows;
        Point3::new(
            r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
            r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
            r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
        )
    }

    pub fn mul_mat(&self, o: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.rows[i][k] * o.rows[k][j]).sum();
            }
        }
        Mat3 { rows: out }
    }

    pub fn transpose(&self) -> Mat3 {
        let r = &self.rows;
        Mat3::from_rows(
            [r[0][0], r[1][0], r[2][0]],
            [r[0][1], r[1][1], r[2][1]],
            [r[0][2], r[1][2], r[2][2]],
        )
    }

    pub fn det(&self) -> f64 {
        let r = &self.rows;
        r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
    }

    /// Max absolute deviation of R^T R from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.transpose().mul_mat(self);
        let mut err: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((gram.rows[i][j] - target).abs());
            }
        }
        err
    }
}

/// Triangle given by its three vertices. Degenerate (collinear or
/// coincident) vertices are permitted; closest-point queries fall back to
/// the segment/point hull.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triangle {
    pub a: Point3,
    pub b: Point3,
    pub c: Point3,
}

impl Triangle {
    pub fn new(a: Point3, b: Point3, c: Point3) -> Self {
        Triangle { a, b, c }
    }

    pub fn area(&self) -> f64 {
        (self.b - self.a).cross(self.c - self.a).norm() * 0.5
    }
}

/// Similarity transform between raw and canonical coordinates:
/// `canonical = scale * R * (raw + translation)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizationFrame {
    pub translation: Point3,
    pub rotation: Mat3,
    pub scale: f64,
}

impl NormalizationFrame {
    pub fn identity() -> Self {
        NormalizationFrame {
            translation: Point3::ZERO,
            rotation: Mat3::IDENTITY,
            scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rotation.orthonormality_error() > 1e-9
            || (self.rotation.det() - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidParameter(
                "frame rotation is not a proper rotation".into(),
            ));
        }
        if !self.scale.is_finite() || self.scale <= 0.0 {
            return Err(Error::InvalidParameter("frame scale must be > 0".into()));
        }
        Ok(())
    }

    pub fn to_canonical(&self, raw: Point3) -> Point3 {
        self.rotation.mul_vec(raw + self.translation) * self.scale
    }

    pub fn to_raw(&self, canonical: Point3) -> Point3 {
        self.rotation.transpose().mul_vec(canonical / self.scale) - self.translation
    }
}

/// Ordered list of 3D points plus an optional record of how the raw input
/// was mapped into canonical space.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    frame: Option<NormalizationFrame>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        PointCloud {
            points,
            frame: None,
        }
    }

    pub fn with_frame(points: Vec<Point3>, frame: NormalizationFrame) -> Self {
        PointCloud {
            points,
            frame: Some(frame),
        }
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn frame(&self) -> Option<&NormalizationFrame> {
        self.frame.as_ref()
    }

    pub fn set_frame(&mut self, frame: Option<NormalizationFrame>) {
        self.frame = frame;
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    /// Axis-aligned bounding box, or an error for an empty cloud.
    pub fn bounding_box(&self) -> Result<(Point3, Point3)> {
        let first = *self.points.first().ok_or(Error::EmptyInput)?;
        let mut lo = first;
        let mut hi = first;
        for &p in &self.points[1..] {
            lo = lo.min_components(p);
            hi = hi.max_components(p);
        }
        Ok((lo, hi))
    }
}

/// Center the cloud at its bounding-box center and scale the longest
/// bounding-box edge to 1. The returned cloud's frame records the raw ->
/// canonical map so it can be inverted later.
pub fn normalize_cloud(cloud: &PointCloud) -> Result<PointCloud> {
    let (lo, hi) = cloud.bounding_box()?;
    let extent = hi - lo;
    let longest = extent.x.max(extent.y).max(extent.z);
    if longest <= 0.0 {
        return Err(Error::DegenerateExtent);
    }
    let center = (lo + hi) * 0.5;
    let frame = NormalizationFrame {
        translation: -center,
        rotation: Mat3::IDENTITY,
        scale: 1.0 / longest,
    };
    let points = cloud
        .points()
        .iter()
        .map(|&p| frame.to_canonical(p))
        .collect();
    Ok(PointCloud::with_frame(points, frame))
}

/// Apply the inverse of the recorded frame, recovering raw coordinates.
pub fn denormalize_cloud(cloud: &PointCloud) -> Result<PointCloud> {
    let frame = cloud.frame().ok_or(Error::MissingFrame)?;
    let points = cloud.points().iter().map(|&p| frame.to_raw(p)).collect();
    Ok(PointCloud::new(points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn random_point(rng: &mut impl Rng, lo: f64, hi: f64) -> Point3 {
        Point3::new(
            rng.random_range(lo..hi),
            rng.random_range(lo..hi),
            rng.random_range(lo..hi),
        )
    }

    #[test]
    fn cube_corners_normalize_to_half_unit() {
        let mut pts = Vec::new();
        for &x in &[-5.0, 5.0] {
            for &y in &[-5.0, 5.0] {
                for &z in &[-5.0, 5.0] {
                    pts.push(Point3::new(x, y, z));
                }
            }
        }
        let cloud = PointCloud::new(pts);
        let canon = normalize_cloud(&cloud).unwrap();
        let frame = canon.frame().unwrap();
        assert_eq!(frame.scale, 0.1);
        for p in canon.points() {
            assert_eq!(p.x.abs(), 0.5);
            assert_eq!(p.y.abs(), 0.5);
            assert_eq!(p.z.abs(), 0.5);
        }
    }

    #[test]
    fn already_canonical_cloud_gets_identity_frame() {
        let cloud = PointCloud::new(vec![
            Point3::new(-0.5, -0.25, 0.0),
            Point3::new(0.5, 0.25, 0.0),
        ]);
        let canon = normalize_cloud(&cloud).unwrap();
        let frame = canon.frame().unwrap();
        assert_eq!(frame.translation, Point3::ZERO);
        assert_eq!(frame.scale, 1.0);
    }

    #[test]
    fn normalize_round_trip_is_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let pts: Vec<Point3> = (0..200).map(|_| random_point(&mut rng, -3.0, 9.0)).collect();
        let cloud = PointCloud::new(pts.clone());
        let canon = normalize_cloud(&cloud).unwrap();
        let back = denormalize_cloud(&canon).unwrap();
        for (orig, restored) in pts.iter().zip(back.points()) {
            assert!((orig.x - restored.x).abs() < 1e-12);
            assert!((orig.y - restored.y).abs() < 1e-12);
            assert!((orig.z - restored.z).abs() < 1e-12);
        }
    }

    #[test]
    fn denormalize_requires_frame() {
        let cloud = PointCloud::new(vec![Point3::ZERO]);
        assert!(matches!(
            denormalize_cloud(&cloud),
            Err(Error::MissingFrame)
        ));
    }

    #[test]
    fn frame_round_trip_random() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..50 {
            let axis = random_point(&mut rng, -1.0, 1.0).normalized().unwrap();
            let rot = rotation_to_target(axis).unwrap();
            let frame = NormalizationFrame {
                translation: random_point(&mut rng, -2.0, 2.0),
                rotation: rot,
                scale: rng.random_range(0.1..5.0),
            };
            frame.validate().unwrap();
            let p = random_point(&mut rng, -4.0, 4.0);
            let rt = frame.to_raw(frame.to_canonical(p));
            assert!(p.dist(rt) < 1e-12 * (1.0 + p.norm()));
        }
    }

    #[test]
    fn degenerate_extent_rejected() {
        let cloud = PointCloud::new(vec![Point3::new(1.0, 2.0, 3.0); 4]);
        assert!(matches!(
            normalize_cloud(&cloud),
            Err(Error::DegenerateExtent)
        ));
    }

    #[test]
    fn frame_scale_two_translation_x() {
        let frame = NormalizationFrame {
            translation: Point3::new(1.0, 0.0, 0.0),
            rotation: Mat3::IDENTITY,
            scale: 2.0,
        };
        let raw = frame.to_raw(Point3::ZERO);
        assert_eq!(frame.to_canonical(raw), Point3::ZERO);
    }
}
