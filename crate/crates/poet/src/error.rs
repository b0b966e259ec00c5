//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by estimation, simulation and I/O routines.
#[derive(Debug, Error)]
pub enum PoetError {
    /// Input contained NaN or infinite entries.
    #[error("non-finite value at ({row}, {col}) in {context}")]
    NonFinite {
        row: usize,
        col: usize,
        context: String,
    },

    /// A matrix expected to be positive definite was not.
    #[error("matrix is numerically singular (lambda_min = {lambda_min:.3e})")]
    SingularMatrix { lambda_min: f64 },

    /// The thresholded idiosyncratic covariance could not be inverted.
    /// Carries the threshold constant that produced it so the caller can
    /// run the C_min search.
    #[error(
        "thresholded idiosyncratic covariance is singular (lambda_min = {lambda_min:.3e}, C = {c}); \
         increase C above C_min"
    )]
    SingularIdiosyncratic { lambda_min: f64, c: f64 },

    /// VAR(1) coefficient matrix has spectral radius >= 1.
    #[error("VAR(1) process is non-stationary (spectral radius = {radius:.6})")]
    NonStationary { radius: f64 },

    /// Structured parse failure with the offending location.
    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },

    /// Shape disagreement between inputs.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    /// Parameter outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Minimum-variance objective degenerate (1'S^-1 1 ~ 0).
    #[error("degenerate minimum-variance objective: 1'S^-1 1 = {value:.3e}")]
    DegenerateObjective { value: f64 },

    /// Cross-validation grid collapsed to nothing.
    #[error("empty threshold grid: C_min + eps = {lower:.4} exceeds M = {upper:.4}; increase M")]
    EmptyGrid { lower: f64, upper: f64 },

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// CSV-level failure not attributable to a single cell.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, PoetError>;
