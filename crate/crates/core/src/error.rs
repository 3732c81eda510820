//! Error type shared across the pipeline.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("degenerate extent")]
    DegenerateExtent,
    #[error("missing normalization frame")]
    MissingFrame,
    #[error("direction not normalized")]
    DirectionNotNormalized,
    #[error("insufficient points for triangle fan")]
    InsufficientPointsForFan,
    #[error("empty seed set; check band/grid parameters")]
    EmptySeedSet,
    #[error("grid bounds do not cover the cloud extent padded by the distance band")]
    GridTooSmall,
    #[error("ambiguous projection")]
    AmbiguousProjection,
    #[error("projection failed for seed {index} at ({x}, {y}, {z}): {source}")]
    SeedProjection {
        index: usize,
        x: f64,
        y: f64,
        z: f64,
        source: Box<Error>,
    },
    #[error("too few points for bias statistic")]
    TooFewForBias,
    #[error("sample count {requested} out of range 1..={available}")]
    SampleCountOutOfRange { requested: usize, available: usize },
    #[error("oversample more seeds (reduce voxel size)")]
    InsufficientDensePoints,
    #[error("EMD requires equal sizes")]
    EmdSizeMismatch,
    #[error("band unreachable")]
    BandUnreachable,
    #[error("length mismatch")]
    LengthMismatch,
    #[error("diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },
    #[error("{path}: parse error at line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
