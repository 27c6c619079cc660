//! Error taxonomy for the simulation library.
//!
//! Errors are split by contract: construction/parameter errors, numerical
//! contract violations detected at runtime (which abort a run), and I/O or
//! format errors. Values carried in errors are always `f64` regardless of
//! the scalar the engine runs in.

use std::path::PathBuf;
use thiserror::Error;

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Grid construction rejected (dimension, point count, or box length).
    #[error("invalid grid: {detail}")]
    InvalidGrid { detail: String },

    /// A parameter is outside its documented domain.
    #[error("invalid parameter `{name}` = {value}: {requirement}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },

    /// An operation expecting one field frame received the other.
    #[error("frame mismatch: expected {expected}, found {found}")]
    FrameMismatch {
        expected: &'static str,
        found: &'static str,
    },

    /// Two objects expected to live on the same grid do not.
    #[error("grid mismatch: {detail}")]
    GridMismatch { detail: String },

    /// Adaptive quadrature for an interaction-kernel transform failed to
    /// reach the required tolerance.
    #[error(
        "kernel transform quadrature failed at |k| = {k}: \
         achieved {achieved:e}, required {required:e}"
    )]
    QuadratureFailure { k: f64, achieved: f64, required: f64 },

    /// A density carried negative values beyond the clamping tolerance.
    #[error("negative density: minimum value {min_value:e} below tolerance")]
    NegativeDensity { min_value: f64 },

    /// Orbital orthonormality has degraded past the configured tolerance,
    /// so closed-form trace/Hilbert–Schmidt formulas are no longer valid.
    #[error("orbital Gram matrix drifted to {drift:e} (tolerance {tolerance:e})")]
    GramDegraded { drift: f64, tolerance: f64 },

    /// A gauge mix was requested with a non-unitary matrix.
    #[error("gauge mix matrix is not unitary: deviation {deviation:e}")]
    NonUnitaryMix { deviation: f64 },

    /// A gauge mix attempted to couple orbitals with different occupations.
    #[error(
        "gauge mix couples orbitals {a} and {b} with different occupations \
         ({occ_a} vs {occ_b})"
    )]
    MixAcrossOccupations {
        a: usize,
        b: usize,
        occ_a: f64,
        occ_b: f64,
    },

    /// The split-step stability bound `|dt|·‖V‖_∞ ≤ 0.5` was violated.
    #[error("step stability violated at t = {time}: |dt|·max|V| = {dt_vmax}")]
    StabilityViolation { time: f64, dt_vmax: f64 },

    /// A time-ordered consumer (phase accumulator, diagnostics series) was
    /// fed a sample whose time stamp is inconsistent with its record.
    #[error("time mismatch: previous stamp {expected}, received {found}")]
    TimeMismatch { expected: f64, found: f64 },

    /// A fit was requested on too little data.
    #[error("insufficient samples: need {needed}, got {got} ({detail})")]
    InsufficientSamples {
        needed: usize,
        got: usize,
        detail: &'static str,
    },

    /// The dense-kernel oracle was asked for a grid beyond its budget.
    #[error("dense kernel budget exceeded: {points} grid points > budget {budget}")]
    BudgetExceeded { points: usize, budget: usize },

    /// A snapshot file is absent or fails the format check.
    #[error("snapshot unusable at {path}: {detail}")]
    MissingSnapshot { path: PathBuf, detail: String },

    /// A non-finite value appeared during evolution; the run is aborted.
    #[error("numeric abort at t = {time}: {detail}")]
    NumericAbort { time: f64, detail: String },

    /// Configuration file or override rejected.
    #[error("config error at `{path}`: {detail}")]
    Config { path: String, detail: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code the CLI maps this error to
    /// (2 = configuration error, 3 = numeric abort, 1 = other).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. }
            | Error::InvalidParameter { .. }
            | Error::InvalidGrid { .. } => 2,
            Error::NumericAbort { .. } | Error::StabilityViolation { .. } => 3,
            _ => 1,
        }
    }
}
