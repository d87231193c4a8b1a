//! Error type shared across the toolkit.

/// Errors produced by matrix primitives, model evaluation, simulation and
/// verification.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("not in the PSD cone: lambda_min = {lambda_min:.6e}")]
    NotInCone { lambda_min: f64 },

    #[error("boundary singular: lambda_min = {lambda_min:.6e} (tolerance {tol:.6e})")]
    BoundarySingular { lambda_min: f64, tol: f64 },

    #[error("eigenvalue solver did not converge for a {dim}x{dim} matrix")]
    EigenFailed { dim: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid jump mark: lambda_min = {0:.6e}")]
    InvalidMark(f64),

    #[error("wrong model family: expected {expected}, got {got}")]
    WrongFamily {
        expected: &'static str,
        got: &'static str,
    },

    #[error("step {step} (t = {t}) failed: {source}")]
    StepFailed {
        step: usize,
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("non-positive determinant at step {step}")]
    NonPositiveDet { step: usize },

    #[error("decomposition records are not on a common grid")]
    GridMismatch,

    #[error("insufficient sample: need {need}, got {got}")]
    InsufficientSample { need: usize, got: usize },

    #[error("noise budget exhausted in step {step}: {used} draws exceed the block of {budget}")]
    NoiseBudget {
        step: usize,
        used: u64,
        budget: u64,
    },

    #[error("matrix literal parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wrap an error with the step index and time at which it occurred.
    pub fn at_step(self, step: usize, t: f64) -> Error {
        Error::StepFailed {
            step,
            t,
            source: Box::new(self),
        }
    }
}
