//! Pipeline configuration: one flat key-value file covering every knob,
//! with defaults matching the reference parameter settings (voxel 0.004,
//! band [0.011, 0.015], M = 10, k = 100/30, lambda = 1.5).

use std::path::Path;

use crate::error::{Error, Result};
use crate::postprocess::FpsStart;

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub voxel_size: f64,
    pub dist_lower: f64,
    pub dist_upper: f64,
    pub fan_size: usize,
    pub k_direction: usize,
    pub k_distance: usize,
    pub outlier_v: usize,
    pub outlier_lambda: f64,
    pub fps_start: FpsStart,
    pub strict: bool,
    pub seed: u64,
    /// Worker threads; 0 keeps the global default.
    pub threads: usize,
    /// Estimator spec string (`analytic:<shape>` or
    /// `learned:<dir>,<dist>`); may also come from the command line.
    pub estimator: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            voxel_size: 0.004,
            dist_lower: 0.011,
            dist_upper: 0.015,
            fan_size: 10,
            k_direction: 100,
            k_distance: 30,
            outlier_v: 16,
            outlier_lambda: 1.5,
            fps_start: FpsStart::Centroid,
            strict: false,
            seed: 0,
            threads: 0,
            estimator: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.voxel_size.is_finite() || self.voxel_size <= 0.0 {
            return Err(Error::InvalidParameter("voxel_size must be > 0".into()));
        }
        if !self.dist_lower.is_finite()
            || !self.dist_upper.is_finite()
            || self.dist_lower <= 0.0
            || self.dist_lower >= self.dist_upper
        {
            return Err(Error::InvalidParameter(
                "band requires 0 < dist_lower < dist_upper".into(),
            ));
        }
        if self.fan_size < 3 {
            return Err(Error::InvalidParameter("fan_size_m must be >= 3".into()));
        }
        if self.k_direction == 0 || self.k_distance == 0 {
            return Err(Error::InvalidParameter(
                "k_direction and k_distance must be >= 1".into(),
            ));
        }
        if self.outlier_v < 1 {
            return Err(Error::InvalidParameter("outlier_v must be >= 1".into()));
        }
        if !self.outlier_lambda.is_finite() || self.outlier_lambda <= 1.0 {
            return Err(Error::InvalidParameter("outlier_lambda must be > 1".into()));
        }
        Ok(())
    }

    /// Parse the flat key-value format. Unknown keys are rejected; values
    /// are validated against module preconditions before returning.
    pub fn parse(text: &str) -> Result<PipelineConfig> {
        let path = "config";
        let mut config = PipelineConfig::default();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, line_no, "expected `key = value`"))?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| {
                Error::parse(path, line_no, format!("invalid {what} `{value}`"))
            };
            match key {
                "voxel_size" => config.voxel_size = value.parse().map_err(|_| bad("number"))?,
                "dist_lower" => config.dist_lower = value.parse().map_err(|_| bad("number"))?,
                "dist_upper" => config.dist_upper = value.parse().map_err(|_| bad("number"))?,
                "fan_size_m" => config.fan_size = value.parse().map_err(|_| bad("count"))?,
                "k_direction" => config.k_direction = value.parse().map_err(|_| bad("count"))?,
                "k_distance" => config.k_distance = value.parse().map_err(|_| bad("count"))?,
                "outlier_v" => config.outlier_v = value.parse().map_err(|_| bad("count"))?,
                "outlier_lambda" => {
                    config.outlier_lambda = value.parse().map_err(|_| bad("number"))?
                }
                "fps_start" => {
                    config.fps_start = if value == "centroid" {
                        FpsStart::Centroid
                    } else if let Some(idx) = value.strip_prefix("index:") {
                        FpsStart::Index(idx.parse().map_err(|_| bad("index"))?)
                    } else {
                        return Err(bad("fps_start"));
                    }
                }
                "strict" => config.strict = value.parse().map_err(|_| bad("bool"))?,
                "seed" => config.seed = value.parse().map_err(|_| bad("seed"))?,
                "threads" => config.threads = value.parse().map_err(|_| bad("count"))?,
                "estimator" => config.estimator = Some(value.to_string()),
                other => {
                    return Err(Error::parse(
                        path,
                        line_no,
                        format!("unknown key `{other}`"),
                    ))
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn serialize(&self) -> String {
        let fps = match self.fps_start {
            FpsStart::Centroid => "centroid".to_string(),
            FpsStart::Index(i) => format!("index:{i}"),
        };
        let mut out = String::new();
        out.push_str(&format!("voxel_size = {}\n", self.voxel_size));
        out.push_str(&format!("dist_lower = {}\n", self.dist_lower));
        out.push_str(&format!("dist_upper = {}\n", self.dist_upper));
        out.push_str(&format!("fan_size_m = {}\n", self.fan_size));
        out.push_str(&format!("k_direction = {}\n", self.k_direction));
        out.push_str(&format!("k_distance = {}\n", self.k_distance));
        out.push_str(&format!("outlier_v = {}\n", self.outlier_v));
        out.push_str(&format!("outlier_lambda = {}\n", self.outlier_lambda));
        out.push_str(&format!("fps_start = {fps}\n"));
        out.push_str(&format!("strict = {}\n", self.strict));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("threads = {}\n", self.threads));
        if let Some(est) = &self.estimator {
            out.push_str(&format!("estimator = {est}\n"));
        }
        out
    }

    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        PipelineConfig::parse(&text).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.display().to_string(),
                line,
                message,
            },
            other => other,
        })
    }
}
