use std::io;

use thiserror::Error;

/// Errors produced anywhere in the quantization toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("bad magic")]
    BadMagic,

    #[error("unsupported archive version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated payload: {0}")]
    Truncated(String),

    #[error("duplicate tensor name '{0}'")]
    DuplicateName(String),

    #[error("non-finite value in tensor '{name}' at index {index}")]
    NonFinite { name: String, index: usize },

    #[error("unknown dtype tag {0}")]
    UnknownDtype(u8),

    #[error("unsupported tensor rank {0}, expected 2")]
    UnsupportedRank(u32),

    #[error("invalid UTF-8 in tensor name")]
    InvalidName,

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty calibration set")]
    EmptyCalibration,

    #[error("degenerate calibration: {0}")]
    DegenerateCalibration(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value {value} in channel {channel} exceeds plan capacity {capacity}")]
    PlanCapacityExceeded { channel: usize, value: f64, capacity: f64 },

    #[error("degenerate scale: tensor is all zeros")]
    DegenerateScale,

    #[error("histogram layouts differ: {0}")]
    HistogramMismatch(String),

    #[error("accumulator overflow risk: {0}")]
    AccumulatorOverflow(String),

    #[error("ill-conditioned Hessian, increase damping")]
    IllConditionedHessian,

    #[error("missing tensor '{0}'")]
    MissingTensor(String),

    #[error("recipe error: {0}")]
    Recipe(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable snake_case tag, used in structured CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::BadMagic => "bad_magic",
            Error::UnsupportedVersion(_) => "unsupported_version",
            Error::Truncated(_) => "truncated",
            Error::DuplicateName(_) => "duplicate_name",
            Error::NonFinite { .. } => "non_finite",
            Error::UnknownDtype(_) => "unknown_dtype",
            Error::UnsupportedRank(_) => "unsupported_rank",
            Error::InvalidName => "invalid_name",
            Error::InvalidMatrix(_) => "invalid_matrix",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::EmptyCalibration => "empty_calibration",
            Error::DegenerateCalibration(_) => "degenerate_calibration",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::PlanCapacityExceeded { .. } => "plan_capacity_exceeded",
            Error::DegenerateScale => "degenerate_scale",
            Error::HistogramMismatch(_) => "histogram_mismatch",
            Error::AccumulatorOverflow(_) => "accumulator_overflow",
            Error::IllConditionedHessian => "ill_conditioned_hessian",
            Error::MissingTensor(_) => "missing_tensor",
            Error::Recipe(_) => "recipe",
            Error::Json(_) => "json",
        }
    }

    /// Process exit status: 1 for I/O failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}
