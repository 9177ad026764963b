use thiserror::Error;

#[derive(Debug, Error)]
pub enum PdmpError {
    /// The realized jump rate exceeded the dominating constant of a thinned
    /// mechanism; the user-supplied bound is invalid.
    #[error("jump rate {rate} exceeds the thinning bound {bound}")]
    RateBoundViolated { rate: f64, bound: f64 },

    /// Numeric event-time inversion could not bracket the target hazard
    /// below the search horizon.
    #[error("numeric event-time inversion failed: hazard {reached} < target {target} at horizon {horizon}")]
    NumericInversionFailed {
        target: f64,
        reached: f64,
        horizon: f64,
    },

    /// Two kernels whose component lists cannot be matched were passed to
    /// the maximal coupling.
    #[error("kernel component lists cannot be aligned for maximal coupling")]
    UnalignedKernels,

    /// No closed form or quadrature rule for the requested refreshment
    /// expectation.
    #[error("kernel expectation unavailable for this velocity space")]
    KernelExpectationUnavailable,

    /// Too few events after burn-in for a batch-means estimate.
    #[error("trajectory too short: {events} events after burn-in (need at least {min})")]
    TrajectoryTooShort { events: usize, min: usize },

    #[error("empty mechanism list")]
    EmptyMechanismList,

    /// The minimal-mechanism staying mass is not computable for this kernel.
    #[error("staying mass not computable: refreshment distribution has no atom bookkeeping for this space")]
    StayingMassUnavailable,

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PdmpError>;
