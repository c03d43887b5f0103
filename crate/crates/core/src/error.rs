use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid truncation interval [{lower}, {upper}]")]
    InvalidInterval { lower: f64, upper: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("second-price observations need at least two regressors, got k = {0}")]
    TooFewRegressors(usize),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("gradient oracle returned a non-finite entry at stage {stage}, step {step}")]
    NonFiniteGradient { stage: usize, step: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no candidate is within {radius} of at least {needed} of {total} candidates")]
    NoMajorityCluster {
        radius: f64,
        needed: usize,
        total: usize,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoarseError {
    #[error("invalid set: {0}")]
    InvalidSet(String),
    #[error("point is not covered by the partition")]
    Uncovered,
    #[error("infeasible start point for hit-and-run")]
    InfeasibleStart,
    #[error(transparent)]
    Optim(#[from] OptimError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticError {
    #[error("problem too large for dense Hessian: d*k = {0} > 64")]
    TooLarge(usize),
    #[error("invalid input: {0}")]
    Input(String),
}
