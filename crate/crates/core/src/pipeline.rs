//! End-to-end upsampling: normalize, sample seeds, project, remove
//! outliers, denormalize, and size each requested scale by FPS. One dense
//! generation pass serves every scale factor.

use std::path::Path;
use std::time::{Duration, Instant};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::geom::{denormalize_cloud, normalize_cloud, KnnIndex, NormalizationFrame, PointCloud};
use crate::nn::NetworkParams;
use crate::postprocess::{farthest_point_sampling, remove_outliers, OutlierConfig, ScaleRequest};
use crate::projection::{
    project_all, AnalyticEstimator, LearnedEstimator, ProjectionConfig, ProjectionEstimator,
    ProjectionStats,
};
use crate::seeding::{sample_seeds, SeedBand, VoxelGridSpec};
use crate::shapes::Shape;

/// How to build the per-seed estimator. Analytic shapes are given in raw
/// (input-file) coordinates and mapped into canonical space once the
/// normalization frame is known; learned networks operate in canonical
/// space natively.
pub enum EstimatorSpec {
    Analytic(Shape),
    Learned {
        direction: NetworkParams,
        distance: NetworkParams,
    },
}

impl EstimatorSpec {
    /// Parse `analytic:<shape-spec>` or `learned:<dir-params>,<dist-params>`
    /// (learned params are loaded from the named files).
    pub fn parse(spec: &str) -> Result<EstimatorSpec> {
        if let Some(shape) = spec.strip_prefix("analytic:") {
            return Ok(EstimatorSpec::Analytic(shape.parse()?));
        }
        if let Some(paths) = spec.strip_prefix("learned:") {
            let (dir_path, dist_path) = paths.split_once(',').ok_or_else(|| {
                Error::InvalidParameter(
                    "learned estimator needs `learned:<dir-params>,<dist-params>`".into(),
                )
            })?;
            let direction = crate::nn::load_params(Path::new(dir_path.trim()))?;
            let distance = crate::nn::load_params(Path::new(dist_path.trim()))?;
            return Ok(EstimatorSpec::Learned {
                direction,
                distance,
            });
        }
        Err(Error::InvalidParameter(format!(
            "estimator spec `{spec}` must start with `analytic:` or `learned:`"
        )))
    }

    fn instantiate(&self, frame: &NormalizationFrame) -> Result<Box<dyn ProjectionEstimator>> {
        match self {
            EstimatorSpec::Analytic(shape) => Ok(Box::new(AnalyticEstimator::new(
                shape.to_canonical(frame)?,
            ))),
            EstimatorSpec::Learned {
                direction,
                distance,
            } => Ok(Box::new(LearnedEstimator::new(
                direction.clone(),
                distance.clone(),
            )?)),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct UpsampleStats {
    pub input_size: usize,
    pub seed_count: usize,
    pub projection: ProjectionStats,
    pub outliers_removed: usize,
    pub dense_size: usize,
    pub stage_timings: Vec<(String, Duration)>,
}

#[derive(Debug)]
pub struct UpsampleOutput {
    /// (scale factor, output cloud), in the requested order.
    pub scales: Vec<(f64, PointCloud)>,
    pub stats: UpsampleStats,
}

/// Run the full pipeline. Stage errors carry the stage name via the error
/// variants; timings and counts are returned for reporting.
pub fn upsample(
    input: &PointCloud,
    scale_factors: &[f64],
    estimator: &EstimatorSpec,
    config: &PipelineConfig,
) -> Result<UpsampleOutput> {
    config.validate()?;
    if scale_factors.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one scale factor is required".into(),
        ));
    }
    let requests: Vec<ScaleRequest> = scale_factors
        .iter()
        .map(|&r| ScaleRequest::new(r, input.len()))
        .collect::<Result<_>>()?;

    let run = || -> Result<UpsampleOutput> {
        let mut stats = UpsampleStats {
            input_size: input.len(),
            ..UpsampleStats::default()
        };
        let stage = |name: &str, start: Instant, stats: &mut UpsampleStats| {
            stats
                .stage_timings
                .push((name.to_string(), start.elapsed()));
        };

        let t = Instant::now();
        let canonical = normalize_cloud(input)?;
        let frame = *canonical.frame().expect("normalize_cloud sets the frame");
        stage("normalize", t, &mut stats);

        let estimator = estimator.instantiate(&frame)?;

        let t = Instant::now();
        let band = SeedBand::new(config.dist_lower, config.dist_upper, config.fan_size)?;
        let grid = VoxelGridSpec::for_cloud(&canonical, config.voxel_size, &band)?;
        let seeds = sample_seeds(&canonical, &grid, &band)?;
        stats.seed_count = seeds.len();
        stage("seed sampling", t, &mut stats);

        let t = Instant::now();
        let index = KnnIndex::build(&canonical)?;
        let projection_config = ProjectionConfig {
            k_dir: estimator.preferred_k_dir().unwrap_or(config.k_direction),
            k_dist: estimator.preferred_k_dist().unwrap_or(config.k_distance),
            strict: config.strict,
        };
        let (dense, proj_stats) =
            project_all(&seeds, estimator.as_ref(), &canonical, &index, &projection_config)?;
        stats.projection = proj_stats;
        stage("projection", t, &mut stats);

        let t = Instant::now();
        let outlier_config = OutlierConfig {
            neighbor_count: config.outlier_v,
            lambda: config.outlier_lambda,
        };
        let cleaned = remove_outliers(&dense, &outlier_config)?;
        stats.outliers_removed = dense.len() - cleaned.len();
        stats.dense_size = cleaned.len();
        stage("outlier removal", t, &mut stats);

        let t = Instant::now();
        let raw_dense = denormalize_cloud(&cleaned)?;
        stage("denormalize", t, &mut stats);

        let mut outputs = Vec::with_capacity(requests.len());
        for req in &requests {
            let t = Instant::now();
            let target = req.target();
            if raw_dense.len() < target {
                return Err(Error::InsufficientDensePoints);
            }
            let sampled = farthest_point_sampling(&raw_dense, target, config.fps_start)?;
            stage(&format!("fps x{}", req.factor), t, &mut stats);
            outputs.push((req.factor, sampled));
        }
        Ok(UpsampleOutput {
            scales: outputs,
            stats,
        })
    };

    if config.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
        pool.install(run)
    } else {
        run()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point3;
    use crate::shapes::sample_unit_direction;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn sphere_cloud(n: usize, radius: f64, seed: u64) -> PointCloud {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| sample_unit_direction(&mut rng) * radius)
                .collect(),
        )
    }

    #[test]
    fn analytic_sphere_end_to_end_small() {
        let input = sphere_cloud(512, 0.4, 1);
        let config = PipelineConfig {
            voxel_size: 0.02,
            dist_lower: 0.03,
            dist_upper: 0.05,
            outlier_v: 8,
            ..PipelineConfig::default()
        };
        let estimator = EstimatorSpec::Analytic(Shape::sphere(Point3::ZERO, 0.4));
        let output = upsample(&input, &[2.0], &estimator, &config).unwrap();
        assert_eq!(output.scales.len(), 1);
        let (factor, cloud) = &output.scales[0];
        assert_eq!(*factor, 2.0);
        assert_eq!(cloud.len(), 1024);
        for p in cloud.points() {
            assert!((p.norm() - 0.4).abs() < 1e-9, "residual {}", (p.norm() - 0.4).abs());
        }
        assert!(output.stats.seed_count >= 1024);
    }

    #[test]
    fn multi_scale_shares_one_dense_pass() {
        let input = sphere_cloud(256, 0.4, 2);
        let config = PipelineConfig {
            voxel_size: 0.02,
            dist_lower: 0.03,
            dist_upper: 0.05,
            outlier_v: 8,
            ..PipelineConfig::default()
        };
        let estimator = EstimatorSpec::Analytic(Shape::sphere(Point3::ZERO, 0.4));
        let output = upsample(&input, &[2.0, 4.0], &estimator, &config).unwrap();
        assert_eq!(output.scales[0].1.len(), 512);
        assert_eq!(output.scales[1].1.len(), 1024);
        // One seed-sampling and one projection stage regardless of scales.
        let seed_stages = output
            .stats
            .stage_timings
            .iter()
            .filter(|(name, _)| name == "seed sampling")
            .count();
        assert_eq!(seed_stages, 1);
    }

    #[test]
    fn oversampling_error_names_the_remedy() {
        let input = sphere_cloud(256, 0.4, 3);
        let config = PipelineConfig {
            voxel_size: 0.05,
            dist_lower: 0.06,
            dist_upper: 0.10,
            outlier_v: 8,
            ..PipelineConfig::default()
        };
        let estimator = EstimatorSpec::Analytic(Shape::sphere(Point3::ZERO, 0.4));
        let err = upsample(&input, &[64.0], &estimator, &config).unwrap_err();
        assert!(matches!(err, Error::InsufficientDensePoints));
        assert!(err.to_string().contains("oversample more seeds"));
    }

    #[test]
    fn pipeline_is_deterministic_across_thread_counts() {
        let input = sphere_cloud(256, 0.4, 4);
        let base = PipelineConfig {
            voxel_size: 0.02,
            dist_lower: 0.03,
            dist_upper: 0.05,
            outlier_v: 8,
            ..PipelineConfig::default()
        };
        let estimator = EstimatorSpec::Analytic(Shape::sphere(Point3::ZERO, 0.4));
        let single = PipelineConfig {
            threads: 1,
            ..base.clone()
        };
        let dual = PipelineConfig {
            threads: 2,
            ..base
        };
        let a = upsample(&input, &[3.0], &estimator, &single).unwrap();
        let b = upsample(&input, &[3.0], &estimator, &dual).unwrap();
        assert_eq!(a.scales[0].1.points(), b.scales[0].1.points());
    }

    #[test]
    fn estimator_spec_parsing() {
        assert!(EstimatorSpec::parse("analytic:sphere:0,0,0,0.4").is_ok());
        assert!(EstimatorSpec::parse("analytic:blob:1").is_err());
        assert!(EstimatorSpec::parse("unknown:x").is_err());
        assert!(EstimatorSpec::parse("learned:only_one_path").is_err());
    }
}
