//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by surrogate assembly, training, and the benchmark harness.
#[derive(Error, Debug)]
pub enum MlioError {
    /// The bordered Kriging matrix could not be factorized, even after the
    /// nugget guard engaged.
    #[error("kriging system is singular (n = {n}); duplicate locations?")]
    SingularSystem { n: usize },

    /// Locations of different dimensionality were mixed.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Prediction variance fell below the round-off tolerance.
    #[error("kriging variance {value:.3e} is more negative than -1e-12; model breakage")]
    NegativeVariance { value: f64 },

    /// Confidence level outside (0, 1).
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidProbability(f64),

    /// Too few observations to build a semivariogram or a Kriging system.
    #[error("need at least {needed} observations, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    /// The bounded least-squares solver could not improve on an infeasible state.
    #[error("variogram fit failure: {0}")]
    FitFailure(String),

    /// A prediction was requested from an untrained layer.
    #[error("layer {0} is not trained")]
    NotTrained(u8),

    /// A sampling pool reached its size cap.
    #[error("sampling pool for layer {0} reached its cap")]
    CapReached(u8),

    /// The acquisition optimizer proposed a point that is already sampled.
    #[error("acquisition returned an already-sampled location")]
    DuplicateCandidate,

    /// Validation pool empty where an error estimate was requested.
    #[error("no validation points available for layer {0}")]
    EmptyValidation(u8),

    /// The greedy operator returned no candidates.
    #[error("greedy operator returned an empty candidate subset")]
    EmptySubset,

    /// Exhaustive pool search over an empty pool.
    #[error("candidate pool is empty")]
    EmptyPool,

    /// The black-box evaluator failed at a location.
    #[error("black-box evaluation failed at {location:?}: {reason}")]
    BlackBoxFailure { location: Vec<f64>, reason: String },

    /// The initialization layout cannot be built within the given budget.
    #[error("initialization needs {needed} samples but the budget allows {budget}")]
    InsufficientInit { needed: usize, budget: usize },

    /// Unknown test function identifier.
    #[error("unknown test function id: {0}")]
    UnknownId(String),

    /// Point outside the normalized unit hypercube.
    #[error("coordinate {value} at index {index} is outside [0, 1]")]
    OutOfDomain { index: usize, value: f64 },

    /// The reference design range is zero, so errors cannot be normalized.
    #[error("reference UQ values are constant; error normalizer is degenerate")]
    DegenerateNormalizer,

    /// No candidate designs available for the greedy sweep.
    #[error("no candidate designs available")]
    NoCandidates,

    /// Invalid configuration value.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Filesystem or serialization failure in the campaign harness.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// CSV writing/reading failure.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// JSON (de)serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, MlioError>;
