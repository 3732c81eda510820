//! Dense-cloud cleanup: average-bias outlier removal, farthest point
//! sampling, and the finalize step that sizes the output to `floor(r * n)`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{denormalize_cloud, KnnIndex, Point3, PointCloud};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutlierConfig {
    /// Neighbor count used in the average-bias statistic.
    pub neighbor_count: usize,
    /// Removal multiplier: a point is an outlier when its bias exceeds
    /// `lambda` times the mean bias.
    pub lambda: f64,
}

impl Default for OutlierConfig {
    fn default() -> Self {
        OutlierConfig {
            neighbor_count: 16,
            lambda: 1.5,
        }
    }
}

impl OutlierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.neighbor_count < 1 {
            return Err(Error::InvalidParameter("outlier_v must be >= 1".into()));
        }
        if !self.lambda.is_finite() || self.lambda <= 1.0 {
            return Err(Error::InvalidParameter("outlier_lambda must be > 1".into()));
        }
        Ok(())
    }
}

/// Requested output size `N = floor(r * n)` for input size `n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleRequest {
    pub factor: f64,
    pub input_size: usize,
}

impl ScaleRequest {
    pub fn new(factor: f64, input_size: usize) -> Result<Self> {
        if !factor.is_finite() || factor <= 0.0 || input_size == 0 {
            return Err(Error::InvalidParameter(
                "scale factor and input size must be positive".into(),
            ));
        }
        let req = ScaleRequest { factor, input_size };
        if req.target() == 0 {
            return Err(Error::InvalidParameter(
                "requested output size is zero".into(),
            ));
        }
        Ok(req)
    }

    pub fn target(&self) -> usize {
        (self.factor * self.input_size as f64).floor() as usize
    }
}

/// Single-pass average-bias outlier removal: `b_p` is the mean distance of
/// a point to its `v` nearest neighbors; points with `b_p > lambda * mean(b)`
/// are removed. The statistic is computed once, not iterated.
pub fn remove_outliers(cloud: &PointCloud, cfg: &OutlierConfig) -> Result<PointCloud> {
    cfg.validate()?;
    let v = cfg.neighbor_count;
    if cloud.len() <= v {
        return Err(Error::TooFewForBias);
    }
    let index = KnnIndex::build(cloud)?;
    let biases: Vec<f64> = cloud
        .points()
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            let hits = index.query(p, v + 1);
            let mut sum = 0.0;
            let mut taken = 0usize;
            for (idx, dist) in hits {
                if idx == i {
                    continue;
                }
                if taken == v {
                    break;
                }
                sum += dist;
                taken += 1;
            }
            debug_assert_eq!(taken, v);
            sum / v as f64
        })
        .collect();
    let mean_bias: f64 = biases.iter().sum::<f64>() / biases.len() as f64;
    let threshold = cfg.lambda * mean_bias;
    let kept: Vec<Point3> = cloud
        .points()
        .iter()
        .zip(&biases)
        .filter(|(_, &b)| b <= threshold)
        .map(|(&p, _)| p)
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut out = PointCloud::new(kept);
    out.set_frame(cloud.frame().copied());
    Ok(out)
}

/// Start-point rule for farthest point sampling.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FpsStart {
    /// Point nearest the centroid (deterministic default).
    #[default]
    Centroid,
    /// Fixed index into the cloud.
    Index(usize),
}

/// Greedy farthest point sampling. Each selection maximizes the minimum
/// distance to the already-selected set; ties break to the lowest index.
/// Returns the selected points in selection order.
pub fn farthest_point_sampling(
    cloud: &PointCloud,
    n: usize,
    start: FpsStart,
) -> Result<PointCloud> {
    let points = cloud.points();
    if n < 1 || n > points.len() {
        return Err(Error::SampleCountOutOfRange {
            requested: n,
            available: points.len(),
        });
    }
    let start_idx = match start {
        FpsStart::Index(i) => {
            if i >= points.len() {
                return Err(Error::SampleCountOutOfRange {
                    requested: i,
                    available: points.len(),
                });
            }
            i
        }
        FpsStart::Centroid => {
            let inv = 1.0 / points.len() as f64;
            let centroid = points
                .iter()
                .fold(Point3::ZERO, |acc, &p| acc + p * inv);
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (i, &p) in points.iter().enumerate() {
                let d = centroid.dist_sq(p);
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            best
        }
    };

    let mut selected = Vec::with_capacity(n);
    selected.push(start_idx);
    let mut min_dist_sq: Vec<f64> = points
        .iter()
        .map(|&p| p.dist_sq(points[start_idx]))
        .collect();
    while selected.len() < n {
        let mut best = 0usize;
        let mut best_d = -1.0;
        for (i, &d) in min_dist_sq.iter().enumerate() {
            if d > best_d {
                best_d = d;
                best = i;
            }
        }
        selected.push(best);
        let chosen = points[best];
        for (i, d) in min_dist_sq.iter_mut().enumerate() {
            let nd = chosen.dist_sq(points[i]);
            if nd < *d {
                *d = nd;
            }
        }
    }

    let mut out = PointCloud::new(selected.iter().map(|&i| points[i]).collect());
    out.set_frame(cloud.frame().copied());
    Ok(out)
}

/// Index set selected by FPS (selection order), for equivariance checks.
pub fn farthest_point_sampling_indices(
    cloud: &PointCloud,
    n: usize,
    start: FpsStart,
) -> Result<Vec<usize>> {
    let sampled = farthest_point_sampling(cloud, n, start)?;
    let mut out = Vec::with_capacity(n);
    for p in sampled.points() {
        let idx = cloud
            .points()
            .iter()
            .position(|q| q == p)
            .expect("sampled point comes from the cloud");
        out.push(idx);
    }
    Ok(out)
}

/// Outlier removal, inverse normalization, then FPS down to the requested
/// size. FPS commutes with the uniform scaling of denormalization, so the
/// selected subset is the same either way; the order here follows the
/// pipeline contract.
pub fn finalize(
    dense: &PointCloud,
    req: &ScaleRequest,
    outlier_cfg: &OutlierConfig,
    fps_start: FpsStart,
) -> Result<PointCloud> {
    let cleaned = remove_outliers(dense, outlier_cfg)?;
    let target = req.target();
    if cleaned.len() < target {
        return Err(Error::InsufficientDensePoints);
    }
    let raw = denormalize_cloud(&cleaned)?;
    farthest_point_sampling(&raw, target, fps_start)
}
