use crate::tv::{CompositeSolution, KktReport};

/// Errors produced by the reconstruction library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An operator description is malformed (e.g. a zero-order derivative).
    #[error("invalid operator: {0}")]
    InvalidOperator(String),
    /// An operator was used in the wrong role (trend vs seasonal).
    #[error("operator role mismatch: expected {expected}, got {got}")]
    RoleMismatch {
        expected: &'static str,
        got: &'static str,
    },
    /// The requested evaluation has no implementation for this operator.
    #[error("unsupported operator: {0}")]
    Unsupported(String),
    /// A truncated series could not reach the requested tail tolerance.
    #[error("series truncation: tail bound {bound:.3e} exceeds tolerance {tolerance:.3e} with {terms} terms")]
    Truncation {
        bound: f64,
        tolerance: f64,
        terms: usize,
    },
    /// A weighted density does not decay fast enough to be periodized.
    #[error("functional is not periodizable: declared decay exponent {0} must exceed 1")]
    NotPeriodizable(f64),
    /// A quadrature could not reach its tolerance.
    #[error("integration failed: {0}")]
    Integration(String),
    /// Inputs violate a documented precondition.
    #[error("validation: {0}")]
    Validation(String),
    /// A sensing functional is not admissible for the operator pair.
    #[error("functional #{index} is not admissible: {rule}")]
    Inadmissible { index: usize, rule: String },
    /// The measurements cannot identify the unregularized null-space block.
    #[error("ill-posed problem: {0}")]
    IllPosed(String),
    /// The solver exhausted its iteration budget.
    #[error("solver did not converge after {iterations} iterations (kkt verdict: {})", .report.verdict)]
    NotConverged {
        iterations: usize,
        best: Box<CompositeSolution>,
        report: Box<KktReport>,
    },
    /// A symmetric positive-definite factorization failed.
    #[error("factorization failed even with diagonal jitter {jitter:.3e}")]
    Conditioning { jitter: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
