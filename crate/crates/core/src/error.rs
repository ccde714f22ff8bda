use thiserror::Error;

/// Errors raised by the cost kernel and fundamental solution.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("order n = {n} outside the supported range 1..={max}")]
    OrderOutOfRange { n: usize, max: usize },
    #[error("spatial dimension must be at least 1")]
    ZeroDimension,
    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("expected a vector of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite coordinate in boundary state")]
    NonFinite,
    #[error("matrix is singular")]
    Singular,
    #[error("symmetric part of M is not positive definite")]
    NotPositiveDefinite,
    #[error("finite-difference step {step} too large for t = {t}")]
    StepTooLarge { t: f64, step: f64 },
    #[error("quadrature did not converge: last relative change {0:e}")]
    QuadratureNotConverged(f64),
    #[error("output grid too coarse: mass error {0:e} exceeds 1%")]
    GridTooCoarse(f64),
}

/// Errors raised by the transport solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("step size h must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("point dimension mismatch: {source_dim} vs {target_dim}")]
    DimensionMismatch { source_dim: usize, target_dim: usize },
    #[error("problem has {entries} entries, above the exact-solver limit of {limit}")]
    TooLarge { entries: usize, limit: usize },
    #[error("marginals have different mass: {0:e} vs {1:e}")]
    UnbalancedMass(f64, f64),
    #[error("sinkhorn stopped after {iterations} iterations with marginal violation {violation:e}")]
    NotConverged {
        iterations: usize,
        violation: f64,
        /// Last iterate, returned for inspection.
        plan: Box<crate::optimal_transport::TransportPlan>,
    },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Errors raised while building grids and measures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("weights sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("negative or non-finite weight at index {0}")]
    BadWeight(usize),
    #[error("{points} points but {weights} weights")]
    LengthMismatch { points: usize, weights: usize },
    #[error("cell volume must be positive, got {0}")]
    ZeroVolume(f64),
    #[error("support points are not distinct")]
    DuplicatePoints,
    #[error("grid axis needs a positive cell count and lo < hi")]
    BadAxis,
}

/// Errors raised by the minimizing-movement scheme.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("step {step}: {source}")]
    Step { step: usize, source: Box<SchemeError> },
    #[error("inner optimizer did not converge: {0}")]
    NotConverged(String),
    #[error("time step must be positive, got {0}")]
    BadStep(f64),
    #[error("time {t} outside [0, {t_end}]")]
    TimeOutOfRange { t: f64, t_end: f64 },
    #[error("monitor {name} blew up: {value:e} exceeds 10x running median {median:e}")]
    Blowup { name: String, value: f64, median: f64 },
    #[error("no reference solution for n = {n} with this potential")]
    NoReference { n: usize },
    #[error("test function support touches the grid boundary")]
    SupportTouchesBoundary,
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("initial free energy is not finite")]
    InfiniteEnergy,
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}
