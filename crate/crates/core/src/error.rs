use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not skew-symmetric (symmetric part norm {0:.3e})")]
    NotSkew(f64),

    #[error("matrix is not a rotation: {0}")]
    InvalidRotation(String),

    #[error("quaternion is not unit length (norm {0})")]
    NonUnitQuaternion(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("need at least {needed} frames, got {got}")]
    TooFewFrames { needed: usize, got: usize },

    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),

    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid sampling ratios: {0}")]
    InvalidRatios(String),

    #[error("field kind mismatch: expected {expected}, got {got}")]
    FieldKind { expected: String, got: String },

    #[error("missing field: {0}")]
    MissingField(&'static str),

    #[error("observation error: {0}")]
    Observation(String),

    #[error("optimization diverged after {iterations} iterations (last energy {energy})")]
    Divergence { iterations: usize, energy: f64, trace: Vec<f64> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used by the CLI and the C ABI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NotSkew(_) => "not_skew",
            Error::InvalidRotation(_) => "invalid_rotation",
            Error::NonUnitQuaternion(_) => "non_unit_quaternion",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::TooFewFrames { .. } => "too_few_frames",
            Error::InvalidSkeleton(_) => "invalid_skeleton",
            Error::InvalidSpec(_) => "invalid_spec",
            Error::EmptyDataset => "empty_dataset",
            Error::InvalidRatios(_) => "invalid_ratios",
            Error::FieldKind { .. } => "field_kind",
            Error::MissingField(_) => "missing_field",
            Error::Observation(_) => "observation",
            Error::Divergence { .. } => "divergence",
            Error::Config(_) => "config",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
