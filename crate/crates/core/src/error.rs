use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive definite (pivot {pivot:.3e} at column {column})")]
    NotPositiveDefinite { column: usize, pivot: f64 },

    #[error("matrix is singular (pivot {pivot:.3e} at column {column})")]
    Singular { column: usize, pivot: f64 },

    #[error("unsupported bits per symbol {0}, expected 2, 4 or 6")]
    UnsupportedModulation(usize),

    #[error("unsupported antenna count {0} for the correlation model, expected 1, 2 or 4")]
    UnsupportedAntennaCount(usize),

    #[error("candidate set size {requested} exceeds alphabet size {alphabet} in layer {layer}")]
    CandidateSetTooLarge {
        layer: usize,
        requested: usize,
        alphabet: usize,
    },

    #[error("exhaustive search over {hypotheses} hypotheses exceeds the limit of {limit}")]
    SearchSpaceTooLarge { hypotheses: u128, limit: u128 },

    #[error("candidate symbol {symbol} in layer {layer} has no metric table entry")]
    CandidateOutsideTable { layer: usize, symbol: usize },

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
