//! Surface projection: estimate a direction and a distance per seed and
//! compose the projected point `c_p = c + n * d`.
//!
//! The estimator is a pluggable contract so the geometric pipeline can be
//! verified with closed-form shapes before any training happens; the
//! learned backend lives in [`crate::nn`].

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{rotation_to_target, KnnIndex, Mat3, Point3, PointCloud};
use crate::shapes::Shape;

/// Seed-centered neighborhood for direction estimation: offsets
/// `p_i - seed` of the `k_dir` nearest cloud points, ascending by distance.
#[derive(Clone, Debug)]
pub struct DirectionInput {
    pub offsets: Vec<Point3>,
    /// Seed position, carried as context for oracle backends; learned
    /// estimators must not consume it.
    pub seed: Point3,
}

/// Rotated neighborhood for distance estimation: offsets `R (p_i - seed)`
/// where `R` maps the estimated direction onto the target axis.
#[derive(Clone, Debug)]
pub struct DistanceInput {
    pub offsets: Vec<Point3>,
    pub seed: Point3,
    pub rotation: Mat3,
}

/// Composed per-seed estimate; `projected == seed + direction * distance`
/// exactly, by construction.
#[derive(Clone, Copy, Debug)]
pub struct ProjectionEstimate {
    pub direction: Point3,
    pub distance: f64,
    pub projected: Point3,
}

/// Direction/distance estimator contract. Implementations must be
/// deterministic for fixed inputs and return a unit direction.
pub trait ProjectionEstimator: Sync {
    fn estimate_direction(&self, input: &DirectionInput) -> Result<Point3>;
    fn estimate_distance(&self, input: &DistanceInput) -> Result<f64>;

    /// Neighborhood size the estimator was built for, if it has one
    /// (learned estimators record their training-time k).
    fn preferred_k_dir(&self) -> Option<usize> {
        None
    }

    fn preferred_k_dist(&self) -> Option<usize> {
        None
    }
}

pub fn assemble_direction_input(
    seed: Point3,
    cloud: &PointCloud,
    index: &KnnIndex,
    k_dir: usize,
) -> DirectionInput {
    let offsets = index
        .query(seed, k_dir.min(cloud.len()))
        .into_iter()
        .map(|(idx, _)| cloud.points()[idx] - seed)
        .collect();
    DirectionInput { offsets, seed }
}

pub fn assemble_distance_input(
    seed: Point3,
    direction: Point3,
    cloud: &PointCloud,
    index: &KnnIndex,
    k_dist: usize,
) -> Result<DistanceInput> {
    let rotation = rotation_to_target(direction)?;
    let offsets = index
        .query(seed, k_dist.min(cloud.len()))
        .into_iter()
        .map(|(idx, _)| rotation.mul_vec(cloud.points()[idx] - seed))
        .collect();
    Ok(DistanceInput {
        offsets,
        seed,
        rotation,
    })
}

/// Per-seed projection: direction estimate, rotation normalization,
/// distance estimate, composition. Negative predicted distances are
/// clamped to zero and counted rather than silently flipped.
pub fn project_seed(
    seed: Point3,
    estimator: &dyn ProjectionEstimator,
    cloud: &PointCloud,
    index: &KnnIndex,
    k_dir: usize,
    k_dist: usize,
) -> Result<(ProjectionEstimate, bool)> {
    let dir_input = assemble_direction_input(seed, cloud, index, k_dir);
    let raw_dir = estimator.estimate_direction(&dir_input)?;
    let direction = raw_dir.normalized().ok_or(Error::AmbiguousProjection)?;
    let dist_input = assemble_distance_input(seed, direction, cloud, index, k_dist)?;
    let raw_dist = estimator.estimate_distance(&dist_input)?;
    if !raw_dist.is_finite() {
        return Err(Error::NonFinite {
            context: "distance estimate",
        });
    }
    let clamped = raw_dist < 0.0;
    let distance = raw_dist.max(0.0);
    Ok((
        ProjectionEstimate {
            direction,
            distance,
            projected: seed + direction * distance,
        },
        clamped,
    ))
}

/// Accounting for a batch projection pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ProjectionStats {
    pub projected: usize,
    pub skipped: usize,
    pub negative_distance_clamped: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct ProjectionConfig {
    pub k_dir: usize,
    pub k_dist: usize,
    /// Strict mode aborts on the first failing seed; lenient mode skips the
    /// seed and counts it.
    pub strict: bool,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            k_dir: 100,
            k_dist: 30,
            strict: false,
        }
    }
}

/// Project every seed, preserving seed order and carrying the cloud's
/// normalization frame onto the output.
pub fn project_all(
    seeds: &crate::seeding::SeedSet,
    estimator: &dyn ProjectionEstimator,
    cloud: &PointCloud,
    index: &KnnIndex,
    config: &ProjectionConfig,
) -> Result<(PointCloud, ProjectionStats)> {
    if seeds.is_empty() {
        return Err(Error::EmptySeedSet);
    }
    let results: Vec<(usize, Result<(ProjectionEstimate, bool)>)> = seeds
        .seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            (
                i,
                project_seed(seed, estimator, cloud, index, config.k_dir, config.k_dist),
            )
        })
        .collect();

    let mut points = Vec::with_capacity(seeds.len());
    let mut stats = ProjectionStats::default();
    for (i, result) in results {
        match result {
            Ok((estimate, clamped)) => {
                points.push(estimate.projected);
                stats.projected += 1;
                if clamped {
                    stats.negative_distance_clamped += 1;
                }
            }
            Err(source) => {
                if config.strict {
                    let seed = seeds.seeds[i];
                    return Err(Error::SeedProjection {
                        index: i,
                        x: seed.x,
                        y: seed.y,
                        z: seed.z,
                        source: Box::new(source),
                    });
                }
                stats.skipped += 1;
            }
        }
    }
    if points.is_empty() {
        return Err(Error::EmptySeedSet);
    }
    let mut out = PointCloud::new(points);
    out.set_frame(cloud.frame().copied());
    Ok((out, stats))
}

/// Closed-form estimator: direction toward the shape's nearest surface
/// point and exact unsigned distance. It consumes the seed context and
/// ignores the neighborhoods.
#[derive(Clone, Debug)]
pub struct AnalyticEstimator {
    shape: Shape,
}

impl AnalyticEstimator {
    pub fn new(shape: Shape) -> Self {
        AnalyticEstimator { shape }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }
}

impl ProjectionEstimator for AnalyticEstimator {
    fn estimate_direction(&self, input: &DirectionInput) -> Result<Point3> {
        let nearest = self.shape.nearest_surface_point(input.seed)?;
        (nearest - input.seed)
            .normalized()
            .ok_or(Error::AmbiguousProjection)
    }

    fn estimate_distance(&self, input: &DistanceInput) -> Result<f64> {
        Ok(self.shape.unsigned_distance(input.seed))
    }
}

/// Trained direction/distance networks behind the estimator contract. Both
/// consume only the (rotated) neighborhood offsets, never the seed.
pub struct LearnedEstimator {
    direction: crate::nn::NetworkParams,
    distance: crate::nn::NetworkParams,
}

impl LearnedEstimator {
    pub fn new(
        direction: crate::nn::NetworkParams,
        distance: crate::nn::NetworkParams,
    ) -> Result<Self> {
        if direction.spec.head.output_dim != 3 {
            return Err(Error::InvalidParameter(
                "direction network must have output_dim 3".into(),
            ));
        }
        if distance.spec.head.output_dim != 1 {
            return Err(Error::InvalidParameter(
                "distance network must have output_dim 1".into(),
            ));
        }
        if matches!(direction.task, Some(crate::nn::TrainTask::Distance))
            || matches!(distance.task, Some(crate::nn::TrainTask::Direction))
        {
            return Err(Error::InvalidParameter(
                "parameter files are tagged for the opposite task".into(),
            ));
        }
        Ok(LearnedEstimator {
            direction,
            distance,
        })
    }
}

impl ProjectionEstimator for LearnedEstimator {
    fn estimate_direction(&self, input: &DirectionInput) -> Result<Point3> {
        let out = crate::nn::forward(&self.direction, &input.offsets)?;
        Point3::new(out[0], out[1], out[2])
            .normalized()
            .ok_or(Error::AmbiguousProjection)
    }

    fn estimate_distance(&self, input: &DistanceInput) -> Result<f64> {
        Ok(crate::nn::forward(&self.distance, &input.offsets)?[0])
    }

    fn preferred_k_dir(&self) -> Option<usize> {
        Some(self.direction.input_k)
    }

    fn preferred_k_dist(&self) -> Option<usize> {
        Some(self.distance.input_k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::brute_force_knn;
    use crate::seeding::SeedSet;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn random_cloud(rng: &mut impl Rng, n: usize) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| {
                    Point3::new(
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                    )
                })
                .collect(),
        )
    }

    #[test]
    fn direction_input_at_cloud_point_is_zero_offset() {
        let cloud = PointCloud::new(vec![Point3::new(0.3, -0.1, 0.9)]);
        let index = KnnIndex::build(&cloud).unwrap();
        let input = assemble_direction_input(cloud.points()[0], &cloud, &index, 1);
        assert_eq!(input.offsets, vec![Point3::ZERO]);
    }

    #[test]
    fn direction_input_clamps_k() {
        let cloud = PointCloud::new(vec![Point3::new(1.0, 1.0, 2.0)]);
        let index = KnnIndex::build(&cloud).unwrap();
        let input = assemble_direction_input(Point3::new(1.0, 1.0, 1.0), &cloud, &index, 5);
        assert_eq!(input.offsets, vec![Point3::new(0.0, 0.0, 1.0)]);
    }

    #[test]
    fn direction_offsets_reproduce_knn_set() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let cloud = random_cloud(&mut rng, 200);
        let index = KnnIndex::build(&cloud).unwrap();
        let seed = Point3::new(0.1, 0.2, 0.3);
        let input = assemble_direction_input(seed, &cloud, &index, 10);
        let expect = brute_force_knn(&cloud, seed, 10);
        assert_eq!(input.offsets.len(), 10);
        for (offset, (idx, _)) in input.offsets.iter().zip(&expect) {
            assert_eq!(*offset + seed, cloud.points()[*idx]);
        }
    }

    #[test]
    fn target_direction_keeps_offsets_unrotated() {
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let cloud = random_cloud(&mut rng, 50);
        let index = KnnIndex::build(&cloud).unwrap();
        let seed = Point3::new(0.05, 0.0, 0.0);
        let dir = Point3::new(1.0, 0.0, 0.0);
        let rotated = assemble_distance_input(seed, dir, &cloud, &index, 10).unwrap();
        let plain = assemble_direction_input(seed, &cloud, &index, 10);
        for (r, p) in rotated.offsets.iter().zip(&plain.offsets) {
            assert!(r.dist(*p) < 1e-15);
        }
    }

    #[test]
    fn rotation_preserves_pairwise_distances() {
        let mut rng = ChaCha12Rng::seed_from_u64(55);
        let cloud = random_cloud(&mut rng, 60);
        let index = KnnIndex::build(&cloud).unwrap();
        let seed = Point3::new(0.02, -0.04, 0.06);
        let dir = Point3::new(0.3, -0.5, 0.8).normalized().unwrap();
        let rotated = assemble_distance_input(seed, dir, &cloud, &index, 20).unwrap();
        let plain = assemble_direction_input(seed, &cloud, &index, 20);
        for i in 0..plain.offsets.len() {
            for j in (i + 1)..plain.offsets.len() {
                let before = plain.offsets[i].dist(plain.offsets[j]);
                let after = rotated.offsets[i].dist(rotated.offsets[j]);
                assert!((before - after).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_unit_direction_rejected() {
        let cloud = PointCloud::new(vec![Point3::ZERO]);
        let index = KnnIndex::build(&cloud).unwrap();
        let err = assemble_distance_input(Point3::ZERO, Point3::new(0.5, 0.0, 0.0), &cloud, &index, 1)
            .unwrap_err();
        assert!(matches!(err, Error::DirectionNotNormalized));
    }

    #[test]
    fn sphere_estimator_projects_radially() {
        let shape = Shape::sphere(Point3::ZERO, 0.5);
        let est = AnalyticEstimator::new(shape);
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let mut pts = Vec::new();
        for _ in 0..500 {
            pts.push(crate::shapes::sample_unit_direction(&mut rng) * 0.5);
        }
        let cloud = PointCloud::new(pts);
        let index = KnnIndex::build(&cloud).unwrap();
        let (estimate, clamped) =
            project_seed(Point3::new(0.0, 0.0, 0.6), &est, &cloud, &index, 100, 30).unwrap();
        assert!(!clamped);
        assert!(estimate.direction.dist(Point3::new(0.0, 0.0, -1.0)) < 1e-12);
        assert!((estimate.distance - 0.1).abs() < 1e-12);
        assert!(estimate.projected.dist(Point3::new(0.0, 0.0, 0.5)) < 1e-12);
    }

    #[test]
    fn plane_estimator_drops_to_surface() {
        let shape = Shape::plane(Point3::ZERO, Point3::new(0.0, 0.0, 1.0), 1.0, 1.0);
        let est = AnalyticEstimator::new(shape);
        let cloud = PointCloud::new(vec![Point3::ZERO, Point3::new(0.1, 0.0, 0.0), Point3::new(0.0, 0.1, 0.0)]);
        let index = KnnIndex::build(&cloud).unwrap();
        let (estimate, _) =
            project_seed(Point3::new(0.3, -0.2, 0.014), &est, &cloud, &index, 3, 3).unwrap();
        assert!(estimate.projected.dist(Point3::new(0.3, -0.2, 0.0)) < 1e-12);
        assert!((estimate.distance - 0.014).abs() < 1e-15);
    }

    #[test]
    fn torus_projection_satisfies_implicit_equation() {
        let shape = Shape::torus(Point3::ZERO, 0.3, 0.1);
        let est = AnalyticEstimator::new(shape);
        let cloud = PointCloud::new(vec![
            Point3::new(0.4, 0.0, 0.0),
            Point3::new(0.0, 0.4, 0.0),
            Point3::new(-0.4, 0.0, 0.0),
        ]);
        let index = KnnIndex::build(&cloud).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..50 {
            let seed = Point3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.25..0.25),
            );
            if (seed.x * seed.x + seed.y * seed.y).sqrt() < 0.05 {
                continue;
            }
            let (estimate, _) = project_seed(seed, &est, &cloud, &index, 3, 3).unwrap();
            assert!(shape.implicit_residual(estimate.projected).abs() < 1e-10);
        }
    }

    #[test]
    fn every_closed_form_shape_projects_onto_its_surface() {
        let shapes = [
            Shape::sphere(Point3::new(0.1, 0.0, -0.05), 0.35),
            Shape::plane(Point3::ZERO, Point3::new(0.2, 0.3, 0.9), 0.6, 0.5),
            Shape::cuboid(Point3::ZERO, Point3::new(0.3, 0.25, 0.2)),
            Shape::torus(Point3::ZERO, 0.3, 0.12),
        ];
        let cloud = PointCloud::new(vec![
            Point3::new(0.4, 0.0, 0.0),
            Point3::new(0.0, 0.4, 0.0),
            Point3::new(0.0, 0.0, 0.4),
        ]);
        let index = KnnIndex::build(&cloud).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        for shape in &shapes {
            let est = AnalyticEstimator::new(*shape);
            let mut checked = 0;
            while checked < 40 {
                let seed = Point3::new(
                    rng.random_range(-0.7..0.7),
                    rng.random_range(-0.7..0.7),
                    rng.random_range(-0.7..0.7),
                );
                let Ok((estimate, _)) = project_seed(seed, &est, &cloud, &index, 3, 3) else {
                    continue; // singular locations are allowed to error
                };
                assert!(
                    shape.implicit_residual(estimate.projected).abs() < 1e-9,
                    "{shape:?}"
                );
                checked += 1;
            }
        }
    }

    #[test]
    fn composition_is_exact() {
        let shape = Shape::sphere(Point3::ZERO, 0.5);
        let est = AnalyticEstimator::new(shape);
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let cloud = random_cloud(&mut rng, 100);
        let index = KnnIndex::build(&cloud).unwrap();
        for _ in 0..100 {
            let seed = Point3::new(
                rng.random_range(-0.8..0.8),
                rng.random_range(-0.8..0.8),
                rng.random_range(-0.8..0.8),
            );
            if seed.norm() < 1e-3 {
                continue;
            }
            let (e, _) = project_seed(seed, &est, &cloud, &index, 10, 10).unwrap();
            assert_eq!(e.projected, seed + e.direction * e.distance);
        }
    }

    #[test]
    fn project_all_carries_frame_and_counts() {
        let shape = Shape::sphere(Point3::ZERO, 0.5);
        let est = AnalyticEstimator::new(shape);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut pts: Vec<Point3> = (0..300)
            .map(|_| crate::shapes::sample_unit_direction(&mut rng) * 0.5)
            .collect();
        pts.push(Point3::new(0.5, 0.0, 0.0));
        let mut cloud = PointCloud::new(pts);
        let frame = crate::geom::NormalizationFrame::identity();
        cloud.set_frame(Some(frame));
        let index = KnnIndex::build(&cloud).unwrap();
        let seeds = SeedSet {
            seeds: vec![
                Point3::new(0.0, 0.0, 0.55),
                Point3::new(0.45, 0.0, 0.0),
                Point3::ZERO, // ambiguous: sphere center
            ],
            approx_dists: vec![0.05, 0.05, 0.5],
        };
        let config = ProjectionConfig {
            k_dir: 10,
            k_dist: 10,
            strict: false,
        };
        let (out, stats) = project_all(&seeds, &est, &cloud, &index, &config).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(stats.projected, 2);
        assert_eq!(stats.skipped, 1);
        assert!(out.frame().is_some());
        for p in out.points() {
            assert!((p.norm() - 0.5).abs() < 1e-12);
        }

        let strict = ProjectionConfig {
            strict: true,
            ..config
        };
        let err = project_all(&seeds, &est, &cloud, &index, &strict).unwrap_err();
        assert!(matches!(err, Error::SeedProjection { index: 2, .. }));
    }
}
