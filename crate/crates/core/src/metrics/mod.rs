//! Evaluation metrics: Chamfer Distance, Earth Mover Distance, F-score,
//! point-to-surface statistics, and the Normalized Uniformity Coefficient.
//!
//! Per-point terms are accumulated in sorted order so every metric is
//! exactly invariant under permutations of its inputs.

mod emd;

pub use emd::{emd_approx, emd_exact, hungarian};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{KnnIndex, Point3, PointCloud};
use crate::shapes::{Shape, SurfaceSource};

/// Largest cloud size solved by the exact Hungarian assignment; beyond it
/// the deterministic approximation is used and flagged in the report.
pub const EMD_EXACT_LIMIT: usize = 1024;

fn sorted_sum(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    values.iter().sum()
}

fn directed_mean_nn(from: &PointCloud, to_index: &KnnIndex) -> f64 {
    let dists: Vec<f64> = from
        .points()
        .par_iter()
        .map(|&p| to_index.nearest(p).1)
        .collect();
    sorted_sum(dists) / from.len() as f64
}

/// Symmetric Chamfer Distance: mean nearest-neighbor distance from A to B
/// plus the mean from B to A, in plain (not squared) Euclidean distance.
pub fn chamfer_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput);
    }
    let index_a = KnnIndex::build(a)?;
    let index_b = KnnIndex::build(b)?;
    Ok(directed_mean_nn(a, &index_b) + directed_mean_nn(b, &index_a))
}

/// Minimal mean-cost perfect matching between equal-size clouds. Exact up
/// to [`EMD_EXACT_LIMIT`] points; the boolean flags whether the exact
/// solver ran.
pub fn earth_mover_distance(a: &PointCloud, b: &PointCloud) -> Result<(f64, bool)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput);
    }
    if a.len() != b.len() {
        return Err(Error::EmdSizeMismatch);
    }
    if a.len() <= EMD_EXACT_LIMIT {
        Ok((emd_exact(a.points(), b.points()), true))
    } else {
        Ok((emd_approx(a.points(), b.points()), false))
    }
}

/// F-score at threshold `tau`: harmonic mean of precision (fraction of
/// predicted points within `tau` of the ground truth) and recall (fraction
/// of ground-truth points within `tau` of the prediction).
pub fn f_score(pred: &PointCloud, gt: &PointCloud, tau: f64) -> Result<f64> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::InvalidParameter("tau must be > 0".into()));
    }
    let index_pred = KnnIndex::build(pred)?;
    let index_gt = KnnIndex::build(gt)?;
    let within = |cloud: &PointCloud, index: &KnnIndex| {
        cloud
            .points()
            .par_iter()
            .filter(|&&p| index.nearest(p).1 <= tau)
            .count()
    };
    let precision = within(pred, &index_gt) as f64 / pred.len() as f64;
    let recall = within(gt, &index_pred) as f64 / gt.len() as f64;
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Mean and population standard deviation of exact point-to-surface
/// distances.
pub fn point_to_surface_stats(pred: &PointCloud, surface: &SurfaceSource) -> Result<(f64, f64)> {
    if pred.is_empty() {
        return Err(Error::EmptyInput);
    }
    let dists: Vec<f64> = pred
        .points()
        .par_iter()
        .map(|&p| surface.unsigned_distance(p))
        .collect();
    let n = dists.len() as f64;
    let mean = sorted_sum(dists.clone()) / n;
    let sq_devs: Vec<f64> = dists.iter().map(|d| (d - mean) * (d - mean)).collect();
    let var = sorted_sum(sq_devs) / n;
    Ok((mean, var.sqrt()))
}

/// Normalized Uniformity Coefficient: place `n_disks` random equal-area
/// disks on the surface (area fraction `p` each), count predicted points in
/// each, and return the population standard deviation of the counts
/// normalized by `N * p`. Euclidean balls stand in for geodesic disks; on
/// bounded patches the disk centers are drawn from the interior region
/// where the disk fits, so boundary clipping does not pollute the counts.
pub fn nuc(
    pred: &PointCloud,
    surface: &SurfaceSource,
    p: f64,
    n_disks: usize,
    seed: u64,
) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !p.is_finite() || p <= 0.0 || p >= 1.0 {
        return Err(Error::InvalidParameter(
            "area fraction p must lie in (0, 1)".into(),
        ));
    }
    if n_disks == 0 {
        return Err(Error::InvalidParameter("n_disks must be >= 1".into()));
    }
    let total_area = surface.total_area();
    let radius = (p * total_area / std::f64::consts::PI).sqrt();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let centers: Vec<Point3> = match surface.patch_margin_extents() {
        Some((half_u, half_v)) => {
            let (iu, iv) = (half_u - radius, half_v - radius);
            if iu <= 0.0 || iv <= 0.0 {
                return Err(Error::InvalidParameter(
                    "disk radius exceeds the patch extent".into(),
                ));
            }
            let SurfaceSource::Analytic(Shape::Plane { center, normal, .. }) = surface else {
                unreachable!("patch margins only exist for plane patches");
            };
            let inner = Shape::plane(*center, *normal, iu, iv);
            (0..n_disks)
                .map(|_| inner.sample_surface(&mut rng))
                .collect()
        }
        None => (0..n_disks)
            .map(|_| surface.sample_surface(&mut rng))
            .collect(),
    };
    let index = KnnIndex::build(pred)?;
    let norm = pred.len() as f64 * p;
    let counts: Vec<f64> = centers
        .par_iter()
        .map(|&c| index.count_within(c, radius) as f64 / norm)
        .collect();
    let n = counts.len() as f64;
    let mean = sorted_sum(counts.clone()) / n;
    let sq_devs: Vec<f64> = counts.iter().map(|c| (c - mean) * (c - mean)).collect();
    Ok((sorted_sum(sq_devs) / n).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub tau: f64,
    pub nuc_fractions: Vec<f64>,
    pub n_disks: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            tau: 0.01,
            nuc_fractions: vec![0.002, 0.004, 0.006, 0.008, 0.010],
            n_disks: 9000,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn hash(&self) -> u64 {
        let mut h = fnv1a(0xcbf29ce484222325, &self.tau.to_bits().to_le_bytes());
        for f in &self.nuc_fractions {
            h = fnv1a(h, &f.to_bits().to_le_bytes());
        }
        h = fnv1a(h, &(self.n_disks as u64).to_le_bytes());
        fnv1a(h, &self.seed.to_le_bytes())
    }
}

fn fnv1a(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Full metric bundle for one (predicted, reference) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub cd: f64,
    pub emd: f64,
    pub emd_exact: bool,
    pub f_score: f64,
    pub mean_dist: f64,
    pub std_dist: f64,
    /// (area fraction, NUC value) pairs.
    pub nuc: Vec<(f64, f64)>,
    pub pred_size: usize,
    pub gt_size: usize,
    pub tau: f64,
    pub n_disks: usize,
    pub seed: u64,
    pub config_hash: u64,
}

/// Run the whole metric suite.
pub fn evaluate(
    pred: &PointCloud,
    gt: &PointCloud,
    surface: &SurfaceSource,
    config: &EvalConfig,
) -> Result<MetricsReport> {
    let cd = chamfer_distance(pred, gt)?;
    let (emd, emd_exact) = earth_mover_distance(pred, gt)?;
    let f = f_score(pred, gt, config.tau)?;
    let (mean_dist, std_dist) = point_to_surface_stats(pred, surface)?;
    let mut nuc_values = Vec::with_capacity(config.nuc_fractions.len());
    for &p in &config.nuc_fractions {
        nuc_values.push((p, nuc(pred, surface, p, config.n_disks, config.seed)?));
    }
    Ok(MetricsReport {
        cd,
        emd,
        emd_exact,
        f_score: f,
        mean_dist,
        std_dist,
        nuc: nuc_values,
        pred_size: pred.len(),
        gt_size: gt.len(),
        tau: config.tau,
        n_disks: config.n_disks,
        seed: config.seed,
        config_hash: config.hash(),
    })
}

impl MetricsReport {
    /// Key-value serialization; floats use Rust's shortest round-trip form
    /// so parsing recovers the report losslessly.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        out.push_str("cloudup-report v1\n");
        out.push_str(&format!("config_hash = {:016x}\n", self.config_hash));
        out.push_str(&format!("pred_size = {}\n", self.pred_size));
        out.push_str(&format!("gt_size = {}\n", self.gt_size));
        out.push_str(&format!("tau = {}\n", self.tau));
        out.push_str(&format!("n_disks = {}\n", self.n_disks));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("emd_exact = {}\n", self.emd_exact));
        out.push_str(&format!("cd = {}\n", self.cd));
        out.push_str(&format!("emd = {}\n", self.emd));
        out.push_str(&format!("f_score = {}\n", self.f_score));
        out.push_str(&format!("mean_dist = {}\n", self.mean_dist));
        out.push_str(&format!("std_dist = {}\n", self.std_dist));
        for (p, v) in &self.nuc {
            out.push_str(&format!("nuc {} = {}\n", p, v));
        }
        out
    }

    pub fn parse(text: &str) -> Result<MetricsReport> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse("report", 1, "empty report"))?;
        if header.trim() != "cloudup-report v1" {
            return Err(Error::parse("report", 1, "unknown report version"));
        }
        let mut report = MetricsReport {
            cd: f64::NAN,
            emd: f64::NAN,
            emd_exact: false,
            f_score: f64::NAN,
            mean_dist: f64::NAN,
            std_dist: f64::NAN,
            nuc: Vec::new(),
            pred_size: 0,
            gt_size: 0,
            tau: f64::NAN,
            n_disks: 0,
            seed: 0,
            config_hash: 0,
        };
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse("report", line_no, "expected `key = value`"))?;
            let key = key.trim();
            let value = value.trim();
            let bad =
                |msg: &str| Error::parse("report", line_no, format!("{msg}: `{value}`"));
            match key {
                "config_hash" => {
                    report.config_hash = u64::from_str_radix(value, 16)
                        .map_err(|_| bad("invalid hash"))?
                }
                "pred_size" => report.pred_size = value.parse().map_err(|_| bad("invalid size"))?,
                "gt_size" => report.gt_size = value.parse().map_err(|_| bad("invalid size"))?,
                "tau" => report.tau = value.parse().map_err(|_| bad("invalid number"))?,
                "n_disks" => report.n_disks = value.parse().map_err(|_| bad("invalid count"))?,
                "seed" => report.seed = value.parse().map_err(|_| bad("invalid seed"))?,
                "emd_exact" => {
                    report.emd_exact = value.parse().map_err(|_| bad("invalid bool"))?
                }
                "cd" => report.cd = value.parse().map_err(|_| bad("invalid number"))?,
                "emd" => report.emd = value.parse().map_err(|_| bad("invalid number"))?,
                "f_score" => report.f_score = value.parse().map_err(|_| bad("invalid number"))?,
                "mean_dist" => {
                    report.mean_dist = value.parse().map_err(|_| bad("invalid number"))?
                }
                "std_dist" => {
                    report.std_dist = value.parse().map_err(|_| bad("invalid number"))?
                }
                _ if key.starts_with("nuc ") => {
                    let p: f64 = key[4..].trim().parse().map_err(|_| bad("invalid p"))?;
                    let v: f64 = value.parse().map_err(|_| bad("invalid number"))?;
                    report.nuc.push((p, v));
                }
                other => {
                    return Err(Error::parse(
                        "report",
                        line_no,
                        format!("unknown key `{other}`"),
                    ))
                }
            }
        }
        Ok(report)
    }

    /// Table-scaled rendering: CD/EMD/F-score/mean/std reported in units of
    /// 10^-3, NUC rows labelled by p in units of 10^-2.
    pub fn format_table(&self) -> String {
        let mut out = String::new();
        out.push_str("metric (10^-3)   value\n");
        out.push_str(&format!("CD               {:.3}\n", self.cd * 1e3));
        out.push_str(&format!(
            "EMD{}             {:.3}\n",
            if self.emd_exact { " " } else { "~" },
            self.emd * 1e3
        ));
        out.push_str(&format!("F-score          {:.1}\n", self.f_score * 1e3));
        out.push_str(&format!("mean             {:.3}\n", self.mean_dist * 1e3));
        out.push_str(&format!("std              {:.3}\n", self.std_dist * 1e3));
        if !self.nuc.is_empty() {
            out.push_str("p (10^-2)        NUC\n");
            for (p, v) in &self.nuc {
                out.push_str(&format!("{:<16.1} {:.4}\n", p * 1e2, v));
            }
        }
        out
    }
}
