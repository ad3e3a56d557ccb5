use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("natural parameters do not describe a proper density")]
    ImproperDensity,

    #[error("covariance is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("mean parameters have a non positive-definite covariance")]
    NonPosteriorizableMoments,

    #[error("cavity distribution for site {site} is improper")]
    ImproperCavity { site: usize },

    #[error("exact enumeration supports at most {max} observations, got {found}")]
    TooManyPoints { max: usize, found: usize },

    #[error("utility mass for the selected action is not positive")]
    NonpositiveUtilityMass,

    #[error("expected utility under the cavity is not positive ({value})")]
    ZeroUtilityMass { value: f64 },

    #[error("decision bias undefined: threshold argument {arg} is outside (0, 1)")]
    BiasUndefined { arg: f64 },

    #[error("utility metric is degenerate: all actions have equal expected utility")]
    DegenerateMetric,

    #[error("need at least {needed} nonzero paired differences, got {found}")]
    TooFewSamples { needed: usize, found: usize },

    #[error("kernel matrix is not numerically positive definite (jitter {jitter})")]
    CholeskyFailure { jitter: f64 },

    #[error("EP diverged at sweep {sweep}, site {site}: approximation became improper")]
    DivergenceDetected { sweep: usize, site: usize },

    #[error("EP stalled at sweep {sweep}: every site update was skipped")]
    Stalled { sweep: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("seed search exhausted {tried} candidates without a qualifying instance")]
    SearchExhausted { tried: u64 },
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
