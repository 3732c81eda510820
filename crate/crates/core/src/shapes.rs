//! Closed-form implicit shapes and triangle-mesh surfaces.
//!
//! Both back the same queries: exact unsigned distance, nearest surface
//! point, area-uniform surface sampling, and total area. Analytic shapes
//! double as oracles for the projection pipeline; meshes let real models be
//! plugged in.

use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geom::{closest_point_on_triangle, NormalizationFrame, Point3, Triangle};

/// Axis convention: the torus ring lies in the plane normal to +z through
/// its center; the plane patch is a bounded rectangle with a fixed in-plane
/// basis derived from its normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Sphere {
        center: Point3,
        radius: f64,
    },
    Plane {
        center: Point3,
        normal: Point3,
        half_u: f64,
        half_v: f64,
    },
    Box {
        center: Point3,
        half_extents: Point3,
    },
    Torus {
        center: Point3,
        major_radius: f64,
        minor_radius: f64,
    },
}

impl Shape {
    pub fn sphere(center: Point3, radius: f64) -> Self {
        Shape::Sphere { center, radius }
    }

    pub fn plane(center: Point3, normal: Point3, half_u: f64, half_v: f64) -> Self {
        Shape::Plane {
            center,
            normal: normal.normalized().expect("plane normal must be nonzero"),
            half_u,
            half_v,
        }
    }

    pub fn cuboid(center: Point3, half_extents: Point3) -> Self {
        Shape::Box {
            center,
            half_extents,
        }
    }

    pub fn torus(center: Point3, major_radius: f64, minor_radius: f64) -> Self {
        Shape::Torus {
            center,
            major_radius,
            minor_radius,
        }
    }

    /// In-plane orthonormal basis for the plane patch: u = normalize(n x e)
    /// with e the coordinate axis least aligned with n, v = n x u.
    fn plane_basis(normal: Point3) -> (Point3, Point3) {
        let ax = normal.x.abs();
        let ay = normal.y.abs();
        let az = normal.z.abs();
        let e = if ax <= ay && ax <= az {
            Point3::new(1.0, 0.0, 0.0)
        } else if ay <= az {
            Point3::new(0.0, 1.0, 0.0)
        } else {
            Point3::new(0.0, 0.0, 1.0)
        };
        let u = normal.cross(e).normalized().expect("basis axis");
        let v = normal.cross(u);
        (u, v)
    }

    /// Exact unsigned distance from `p` to the surface.
    pub fn unsigned_distance(&self, p: Point3) -> f64 {
        match *self {
            Shape::Sphere { center, radius } => ((p - center).norm() - radius).abs(),
            Shape::Plane {
                center,
                normal,
                half_u,
                half_v,
            } => {
                let (u, v) = Self::plane_basis(normal);
                let d = p - center;
                let a = d.dot(u).clamp(-half_u, half_u);
                let b = d.dot(v).clamp(-half_v, half_v);
                p.dist(center + u * a + v * b)
            }
            Shape::Box {
                center,
                half_extents,
            } => {
                let d = p - center;
                let q = Point3::new(
                    d.x.abs() - half_extents.x,
                    d.y.abs() - half_extents.y,
                    d.z.abs() - half_extents.z,
                );
                let outside = Point3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0)).norm();
                let inside = q.x.max(q.y).max(q.z).min(0.0);
                (outside + inside).abs()
            }
            Shape::Torus {
                center,
                major_radius,
                minor_radius,
            } => {
                let d = p - center;
                let ring = (d.x * d.x + d.y * d.y).sqrt() - major_radius;
                ((ring * ring + d.z * d.z).sqrt() - minor_radius).abs()
            }
        }
    }

    /// Nearest surface point, or an error where the field is singular
    /// (sphere center, the torus axis, the torus ring circle).
    pub fn nearest_surface_point(&self, p: Point3) -> Result<Point3> {
        match *self {
            Shape::Sphere { center, radius } => {
                let dir = (p - center)
                    .normalized()
                    .ok_or(Error::AmbiguousProjection)?;
                Ok(center + dir * radius)
            }
            Shape::Plane {
                center,
                normal,
                half_u,
                half_v,
            } => {
                let (u, v) = Self::plane_basis(normal);
                let d = p - center;
                let a = d.dot(u).clamp(-half_u, half_u);
                let b = d.dot(v).clamp(-half_v, half_v);
                Ok(center + u * a + v * b)
            }
            Shape::Box {
                center,
                half_extents,
            } => {
                let d = p - center;
                let h = half_extents;
                let inside =
                    d.x.abs() <= h.x && d.y.abs() <= h.y && d.z.abs() <= h.z;
                if !inside {
                    return Ok(center
                        + Point3::new(
                            d.x.clamp(-h.x, h.x),
                            d.y.clamp(-h.y, h.y),
                            d.z.clamp(-h.z, h.z),
                        ));
                }
                // Interior: push to the closest face; ties resolved in x, y, z
                // order with the positive face preferred.
                let gaps = [h.x - d.x.abs(), h.y - d.y.abs(), h.z - d.z.abs()];
                let mut axis = 0;
                for i in 1..3 {
                    if gaps[i] < gaps[axis] {
                        axis = i;
                    }
                }
                let mut q = d;
                match axis {
                    0 => q.x = if d.x >= 0.0 { h.x } else { -h.x },
                    1 => q.y = if d.y >= 0.0 { h.y } else { -h.y },
                    _ => q.z = if d.z >= 0.0 { h.z } else { -h.z },
                }
                Ok(center + q)
            }
            Shape::Torus {
                center,
                major_radius,
                minor_radius,
            } => {
                let d = p - center;
                let ring_len = (d.x * d.x + d.y * d.y).sqrt();
                if ring_len == 0.0 {
                    return Err(Error::AmbiguousProjection);
                }
                let ring = Point3::new(d.x / ring_len, d.y / ring_len, 0.0) * major_radius;
                let tube = d - ring;
                let tube_dir = tube.normalized().ok_or(Error::AmbiguousProjection)?;
                Ok(center + ring + tube_dir * minor_radius)
            }
        }
    }

    pub fn total_area(&self) -> f64 {
        match *self {
            Shape::Sphere { radius, .. } => 4.0 * std::f64::consts::PI * radius * radius,
            Shape::Plane { half_u, half_v, .. } => 4.0 * half_u * half_v,
            Shape::Box { half_extents: h, .. } => {
                8.0 * (h.x * h.y + h.y * h.z + h.x * h.z)
            }
            Shape::Torus {
                major_radius,
                minor_radius,
                ..
            } => {
                4.0 * std::f64::consts::PI * std::f64::consts::PI * major_radius * minor_radius
            }
        }
    }

    /// One area-uniform surface sample.
    pub fn sample_surface(&self, rng: &mut impl Rng) -> Point3 {
        match *self {
            Shape::Sphere { center, radius } => {
                center + sample_unit_direction(rng) * radius
            }
            Shape::Plane {
                center,
                normal,
                half_u,
                half_v,
            } => {
                let (u, v) = Self::plane_basis(normal);
                let a = rng.random_range(-half_u..=half_u);
                let b = rng.random_range(-half_v..=half_v);
                center + u * a + v * b
            }
            Shape::Box {
                center,
                half_extents: h,
            } => {
                let areas = [h.y * h.z, h.x * h.z, h.x * h.y]; // x, y, z face pairs
                let total: f64 = areas.iter().sum();
                let mut pick = rng.random_range(0.0..total);
                let mut axis = 2;
                for (i, &a) in areas.iter().enumerate() {
                    if pick < a {
                        axis = i;
                        break;
                    }
                    pick -= a;
                }
                let sign = if rng.random_range(0..2u8) == 0 { 1.0 } else { -1.0 };
                let a = rng.random_range(-1.0..=1.0);
                let b = rng.random_range(-1.0..=1.0);
                let local = match axis {
                    0 => Point3::new(sign * h.x, a * h.y, b * h.z),
                    1 => Point3::new(a * h.x, sign * h.y, b * h.z),
                    _ => Point3::new(a * h.x, b * h.y, sign * h.z),
                };
                center + local
            }
            Shape::Torus {
                center,
                major_radius,
                minor_radius,
            } => {
                // Rejection on the tube angle corrects for the area element
                // (R + r cos phi) d phi d theta.
                loop {
                    let theta = rng.random_range(0.0..std::f64::consts::TAU);
                    let phi = rng.random_range(0.0..std::f64::consts::TAU);
                    let accept = (major_radius + minor_radius * phi.cos())
                        / (major_radius + minor_radius);
                    if rng.random_range(0.0..1.0) < accept {
                        let ring = major_radius + minor_radius * phi.cos();
                        return center
                            + Point3::new(
                                ring * theta.cos(),
                                ring * theta.sin(),
                                minor_radius * phi.sin(),
                            );
                    }
                }
            }
        }
    }

    /// Axis-aligned bounding box of the surface.
    pub fn bounding_box(&self) -> (Point3, Point3) {
        match *self {
            Shape::Sphere { center, radius } => (
                center - Point3::new(radius, radius, radius),
                center + Point3::new(radius, radius, radius),
            ),
            Shape::Plane {
                center,
                normal,
                half_u,
                half_v,
            } => {
                let (u, v) = Self::plane_basis(normal);
                let ext = Point3::new(
                    (u.x * half_u).abs() + (v.x * half_v).abs(),
                    (u.y * half_u).abs() + (v.y * half_v).abs(),
                    (u.z * half_u).abs() + (v.z * half_v).abs(),
                );
                (center - ext, center + ext)
            }
            Shape::Box {
                center,
                half_extents,
            } => (center - half_extents, center + half_extents),
            Shape::Torus {
                center,
                major_radius,
                minor_radius,
            } => {
                let r = major_radius + minor_radius;
                (
                    center - Point3::new(r, r, minor_radius),
                    center + Point3::new(r, r, minor_radius),
                )
            }
        }
    }

    /// Implicit function vanishing on the surface: distance-like residual
    /// used to verify projected points.
    pub fn implicit_residual(&self, p: Point3) -> f64 {
        match *self {
            Shape::Torus {
                center,
                major_radius,
                minor_radius,
            } => {
                let d = p - center;
                let ring = (d.x * d.x + d.y * d.y).sqrt() - major_radius;
                (ring * ring + d.z * d.z) - minor_radius * minor_radius
            }
            _ => self.unsigned_distance(p),
        }
    }

    /// Map the shape through a raw -> canonical frame. Only frames with
    /// identity rotation are supported (cloud normalization never rotates);
    /// shapes are closed under translation and uniform scaling.
    pub fn to_canonical(&self, frame: &NormalizationFrame) -> Result<Shape> {
        if frame.rotation != crate::geom::Mat3::IDENTITY {
            return Err(Error::InvalidParameter(
                "analytic shapes only support frames with identity rotation".into(),
            ));
        }
        let s = frame.scale;
        let map = |p: Point3| frame.to_canonical(p);
        Ok(match *self {
            Shape::Sphere { center, radius } => Shape::Sphere {
                center: map(center),
                radius: radius * s,
            },
            Shape::Plane {
                center,
                normal,
                half_u,
                half_v,
            } => Shape::Plane {
                center: map(center),
                normal,
                half_u: half_u * s,
                half_v: half_v * s,
            },
            Shape::Box {
                center,
                half_extents,
            } => Shape::Box {
                center: map(center),
                half_extents: half_extents * s,
            },
            Shape::Torus {
                center,
                major_radius,
                minor_radius,
            } => Shape::Torus {
                center: map(center),
                major_radius: major_radius * s,
                minor_radius: minor_radius * s,
            },
        })
    }
}

/// Spec grammar: `sphere:cx,cy,cz,r`, `plane:cx,cy,cz,nx,ny,nz,hu,hv`,
/// `box:cx,cy,cz,hx,hy,hz`, `torus:cx,cy,cz,R,r`.
impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Shape> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidParameter(format!("shape spec `{s}`")))?;
        let nums: Vec<f64> = rest
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidParameter(format!("shape spec number `{t}`")))
            })
            .collect::<Result<_>>()?;
        let expect = |n: usize| -> Result<()> {
            if nums.len() == n {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "shape `{kind}` expects {n} numbers, got {}",
                    nums.len()
                )))
            }
        };
        let shape = match kind {
            "sphere" => {
                expect(4)?;
                if nums[3] <= 0.0 {
                    return Err(Error::InvalidParameter("sphere radius must be > 0".into()));
                }
                Shape::sphere(Point3::new(nums[0], nums[1], nums[2]), nums[3])
            }
            "plane" => {
                expect(8)?;
                let normal = Point3::new(nums[3], nums[4], nums[5]);
                if normal.norm() == 0.0 || nums[6] <= 0.0 || nums[7] <= 0.0 {
                    return Err(Error::InvalidParameter("invalid plane spec".into()));
                }
                Shape::plane(Point3::new(nums[0], nums[1], nums[2]), normal, nums[6], nums[7])
            }
            "box" => {
                expect(6)?;
                if nums[3] <= 0.0 || nums[4] <= 0.0 || nums[5] <= 0.0 {
                    return Err(Error::InvalidParameter(
                        "box half-extents must be > 0".into(),
                    ));
                }
                Shape::cuboid(
                    Point3::new(nums[0], nums[1], nums[2]),
                    Point3::new(nums[3], nums[4], nums[5]),
                )
            }
            "torus" => {
                expect(5)?;
                if nums[3] <= 0.0 || nums[4] <= 0.0 || nums[4] >= nums[3] {
                    return Err(Error::InvalidParameter(
                        "torus requires 0 < minor < major".into(),
                    ));
                }
                Shape::torus(Point3::new(nums[0], nums[1], nums[2]), nums[3], nums[4])
            }
            other => {
                return Err(Error::InvalidParameter(format!("unknown shape `{other}`")))
            }
        };
        Ok(shape)
    }
}

pub fn sample_unit_direction(rng: &mut impl Rng) -> Point3 {
    loop {
        let v = Point3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm_sq();
        if n > 1e-6 && n <= 1.0 {
            return v / n.sqrt();
        }
    }
}

/// Triangle soup with cumulative areas for area-weighted sampling.
/// Nearest-point queries are answered exactly by a scan over all triangles.
#[derive(Clone, Debug)]
pub struct TriangleMesh {
    triangles: Vec<Triangle>,
    cumulative_areas: Vec<f64>,
    total_area: f64,
}

impl TriangleMesh {
    pub fn new(triangles: Vec<Triangle>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut cumulative_areas = Vec::with_capacity(triangles.len());
        let mut acc = 0.0;
        for t in &triangles {
            acc += t.area();
            cumulative_areas.push(acc);
        }
        if acc <= 0.0 {
            return Err(Error::DegenerateExtent);
        }
        Ok(TriangleMesh {
            triangles,
            cumulative_areas,
            total_area: acc,
        })
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn total_area(&self) -> f64 {
        self.total_area
    }

    pub fn nearest_surface_point(&self, p: Point3) -> Point3 {
        let mut best = closest_point_on_triangle(p, &self.triangles[0]);
        let mut best_d = p.dist_sq(best);
        for t in &self.triangles[1..] {
            let q = closest_point_on_triangle(p, t);
            let d = p.dist_sq(q);
            if d < best_d {
                best_d = d;
                best = q;
            }
        }
        best
    }

    pub fn unsigned_distance(&self, p: Point3) -> f64 {
        p.dist(self.nearest_surface_point(p))
    }

    pub fn sample_surface(&self, rng: &mut impl Rng) -> Point3 {
        let pick = rng.random_range(0.0..self.total_area);
        let idx = self
            .cumulative_areas
            .partition_point(|&acc| acc <= pick)
            .min(self.triangles.len() - 1);
        let t = &self.triangles[idx];
        let mut u = rng.random_range(0.0..1.0);
        let mut v = rng.random_range(0.0..1.0);
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        t.a + (t.b - t.a) * u + (t.c - t.a) * v
    }

    pub fn bounding_box(&self) -> (Point3, Point3) {
        let mut lo = self.triangles[0].a;
        let mut hi = lo;
        for t in &self.triangles {
            for p in [t.a, t.b, t.c] {
                lo = lo.min_components(p);
                hi = hi.max_components(p);
            }
        }
        (lo, hi)
    }
}

/// Either side of the SurfaceSource contract: analytic shapes or meshes.
#[derive(Clone, Debug)]
pub enum SurfaceSource {
    Analytic(Shape),
    Mesh(TriangleMesh),
}

impl SurfaceSource {
    pub fn unsigned_distance(&self, p: Point3) -> f64 {
        match self {
            SurfaceSource::Analytic(s) => s.unsigned_distance(p),
            SurfaceSource::Mesh(m) => m.unsigned_distance(p),
        }
    }

    pub fn nearest_surface_point(&self, p: Point3) -> Result<Point3> {
        match self {
            SurfaceSource::Analytic(s) => s.nearest_surface_point(p),
            SurfaceSource::Mesh(m) => Ok(m.nearest_surface_point(p)),
        }
    }

    pub fn sample_surface(&self, rng: &mut impl Rng) -> Point3 {
        match self {
            SurfaceSource::Analytic(s) => s.sample_surface(rng),
            SurfaceSource::Mesh(m) => m.sample_surface(rng),
        }
    }

    pub fn total_area(&self) -> f64 {
        match self {
            SurfaceSource::Analytic(s) => s.total_area(),
            SurfaceSource::Mesh(m) => m.total_area(),
        }
    }

    pub fn bounding_box(&self) -> (Point3, Point3) {
        match self {
            SurfaceSource::Analytic(s) => s.bounding_box(),
            SurfaceSource::Mesh(m) => m.bounding_box(),
        }
    }

    /// Surfaces with boundary need disk-fit rejection in the NUC metric.
    pub fn is_bounded_patch(&self) -> bool {
        matches!(self, SurfaceSource::Analytic(Shape::Plane { .. }))
    }

    /// Largest half-extent usable for interior disk placement on bounded
    /// patches; `None` for closed surfaces.
    pub fn patch_margin_extents(&self) -> Option<(f64, f64)> {
        match self {
            SurfaceSource::Analytic(Shape::Plane { half_u, half_v, .. }) => {
                Some((*half_u, *half_v))
            }
            _ => None,
        }
    }
}
