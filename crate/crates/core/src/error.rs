use thiserror::Error;

/// Errors produced by the aggregation library.
#[derive(Debug, Error)]
pub enum SdaError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("invalid group: {0}")]
    InvalidGroup(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("q = {q} is outside the {band} band for N = {n}")]
    OutOfBand { n: usize, q: usize, band: &'static str },

    #[error("profile carries no decision mass")]
    NoDecisionMass,

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("enumeration needs {atoms} atoms but the cap is {cap}; use the Monte Carlo simulator instead")]
    EnumerationCap { atoms: u128, cap: u128 },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SdaError {
    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, SdaError::Singular(_) | SdaError::Calibration(_) | SdaError::EnumerationCap { .. })
    }
}

pub type Result<T> = std::result::Result<T, SdaError>;
