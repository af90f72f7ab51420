use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("rank deficient design: {0}")]
    RankDeficient(String),
    #[error("outside the supported regime: {0}")]
    Regime(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("assumption on the true precision fails for delta = {delta}")]
    AssumptionViolated { delta: f64 },
    #[error("point is not in the code's grid")]
    NotInGrid,
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
