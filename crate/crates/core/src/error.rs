use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("scenario validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("unknown identifier: {0}")]
    UnknownId(String),

    #[error("invalid option: {0}")]
    InvalidOption(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("slot {t} out of range (horizon {horizon})")]
    OutOfRange { t: usize, horizon: usize },

    #[error("unknown MCS index {0}")]
    UnknownMcs(u8),

    #[error("per-resource-block rate must be positive, got {0}")]
    NonPositiveRate(f64),

    #[error("zero allocation on node {node} for application {app}")]
    ZeroAllocation { app: String, node: String },

    #[error("missing calibration for branch {branch} in context {context}")]
    MissingCalibration { branch: String, context: String },

    #[error("empty distribution")]
    EmptyDistribution,

    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),

    #[error("empty action space for application {0}")]
    EmptyActionSpace(String),

    #[error("disconnected assignment for application {0}")]
    Disconnected(String),

    #[error("search space of {size} candidates exceeds cap {cap}")]
    CapExceeded { size: f64, cap: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    /// Stable machine-readable tag for CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse(_) => "parse",
            Error::Validation(_) => "validation",
            Error::UnknownId(_) => "unknown_id",
            Error::InvalidOption(_) => "invalid_option",
            Error::InvalidConfiguration(_) => "invalid_configuration",
            Error::OutOfRange { .. } => "out_of_range",
            Error::UnknownMcs(_) => "unknown_mcs",
            Error::NonPositiveRate(_) => "non_positive_rate",
            Error::ZeroAllocation { .. } => "zero_allocation",
            Error::MissingCalibration { .. } => "missing_calibration",
            Error::EmptyDistribution => "empty_distribution",
            Error::TooFewSamples { .. } => "too_few_samples",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NonFiniteGradient(_) => "non_finite_gradient",
            Error::EmptyActionSpace(_) => "empty_action_space",
            Error::Disconnected(_) => "disconnected",
            Error::CapExceeded { .. } => "cap_exceeded",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
