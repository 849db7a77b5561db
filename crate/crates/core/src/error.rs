use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    // scene-io
    #[error("missing COLMAP model file {0}")]
    MissingModelFile(PathBuf),
    #[error("parse error in {file} at line {line}: {message}")]
    ParseError {
        file: String,
        line: usize,
        message: String,
    },
    #[error("inconsistent model: {0}")]
    InconsistentModel(String),
    #[error("unsupported camera model {0}; only PINHOLE and SIMPLE_PINHOLE are handled")]
    UnsupportedCameraModel(String),
    #[error("raster format error: {0}")]
    FormatError(String),
    #[error("corrupt raster: {0}")]
    CorruptRaster(String),
    #[error("split stride must be at least 2, got {0}")]
    InvalidStride(usize),

    // se3-camera
    #[error("rotation is not orthonormal (deviation {0:.3e})")]
    InvalidRotation(f64),
    #[error("view {0} appears in both stack and pool")]
    DuplicateView(usize),
    #[error("rank {rank} out of range for a pool of {pool} views")]
    RankOutOfRange { rank: usize, pool: usize },
    #[error("no registrable subset: probe failed at n = 1")]
    NoRegistrableSubset,
    #[error("quaternion has zero norm")]
    InvalidQuaternion,
    #[error("need at least 2 control points, got {0}")]
    InsufficientControlPoints(usize),
    #[error("poses do not share intrinsics")]
    IntrinsicsMismatch,

    // gauss-render
    #[error("shape mismatch: {0}")]
    ShapeError(String),
    #[error("threshold {0} outside (0, 1)")]
    InvalidThreshold(f64),

    // sparse-optim
    #[error("cloud is empty after pruning")]
    EmptyCloud,
    #[error("initialization failed: {0}")]
    InitializationError(String),

    // fusion loop
    #[error("budget of {total} iterations cannot cover {steps} schedule steps")]
    BudgetTooSmall { total: u64, steps: usize },
    #[error("scale factor eta = {0} outside (0, 1]")]
    InvalidEta(f64),
    #[error("novel pose pool is exhausted")]
    PoolExhausted,
    #[error("enhancer unavailable: {0}")]
    EnhancerUnavailable(String),
    #[error("enhancer protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("instruction pool is empty")]
    EmptyInstructionPool,

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeError(msg.into())
    }
}
