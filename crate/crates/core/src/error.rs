use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("no norming functional selection: {0}")]
    NoNormingSelection(String),

    #[error("index {index} out of range for {len} blocks")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("unsupported space: {0}")]
    UnsupportedSpace(String),

    #[error("unsupported field for this construction: {0}")]
    UnsupportedField(String),

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("premise violated: margin {margin:e} is not below the band {band:e}")]
    PremiseViolated { margin: f64, band: f64 },

    #[error("pipeline contract breach at step `{step}`: {detail}")]
    ContractBreach { step: String, detail: String },

    #[error("serialization: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn breach(step: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::ContractBreach {
            step: step.into(),
            detail: detail.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::PremiseViolated { .. } | Error::Precondition(_) => 2,
            Error::ContractBreach { .. } => 3,
            _ => 1,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
