use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("exponent condition n/q + 2/r < 1 violated: n/q + 2/r = {value}")]
    ExponentViolation { value: f64 },

    #[error("structural condition `{condition}` violated at {witness} (margin {margin:e})")]
    StructureViolation {
        condition: String,
        witness: String,
        margin: f64,
    },

    #[error("invalid subgradient selection: {0}")]
    SubgradientViolation(String),

    #[error("convergence failure: {0}")]
    ConvergenceFailure(String),

    #[error("truncation level {level} must exceed regularization eps = {eps}")]
    TruncationOrder { eps: f64, level: f64 },

    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),

    #[error("mesh with {nodes} nodes exceeds the configured cap of {cap}")]
    SizeOverflow { nodes: usize, cap: usize },

    #[error("operator is not symmetric positive definite: {0}")]
    NonSpd(String),

    #[error("steady state not reached after {steps} steps (last increment rate {rate:e})")]
    StagnationFailure { steps: usize, rate: f64 },

    #[error("cylinder is not contained in the computed domain: {0}")]
    CylinderOutOfDomain(String),

    #[error("runs use different discretizations: {0}")]
    MismatchedDiscretization(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
