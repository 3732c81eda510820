//! Self-supervised, arbitrary-scale point cloud upsampling.
//!
//! The pipeline turns a sparse point cloud into a dense one in four steps:
//! voxel-centre seeds are sampled in a distance band around the implicit
//! surface, projected onto the surface by a direction/distance estimator
//! (closed-form for analytic shapes, or a pair of trained point-set
//! networks), cleaned of outliers, and finally resized to `floor(r * n)`
//! points by farthest point sampling. A metric suite (Chamfer, EMD,
//! F-score, point-to-surface stats, NUC) evaluates the result.

pub mod config;
pub mod dataprep;
pub mod error;
pub mod geom;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod postprocess;
pub mod projection;
pub mod seeding;
pub mod shapes;

pub use error::{Error, Result};
pub use geom::{Point3, PointCloud};
