use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("horizon error: {0}")]
    Horizon(String),
    #[error("matrix error: {0}")]
    Matrix(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("feedback/side convention mismatch: {0}")]
    Convention(String),
    #[error("incompatible pair: {0}")]
    Compatibility(String),
    #[error("singular matrix: {0}")]
    Singularity(String),
    #[error("numerical failure: {0}")]
    Numerics(String),
    #[error("frequency check not applicable: {0}")]
    FrequencyDomain(String),
    #[error("interconnection not well-posed: {0}")]
    WellPosedness(String),
    #[error("unsupported nonlinearity kind: {0}")]
    Kind(String),
    #[error("degenerate input set: {0}")]
    Input(String),
    #[error("weight overflow: rho^-2k is not finite at k = {0}")]
    WeightOverflow(usize),
    #[error("internal consistency check failed: {0}")]
    Consistency(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures that come from floating-point breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerics(_) | Error::Singularity(_) | Error::WeightOverflow(_) | Error::Consistency(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
