//! Error type shared across the solver library.

use thiserror::Error;

/// Errors raised by the discretization and solver modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("index {index} out of range for {what} (valid range {range})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        range: String,
    },

    #[error("GLL node search did not converge for degree {degree}, node {node}")]
    RootFinding { degree: usize, node: usize },

    #[error("permeability tensor is singular or not positive definite at ({x}, {y})")]
    SingularMaterial { x: f64, y: f64 },

    #[error("coefficient vector for {what} has length {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("ill-posed problem: {0}")]
    IllPosed(String),

    #[error("factorization breakdown at pivot {pivot}")]
    Factorization { pivot: usize },

    #[error("solve residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },

    #[error("exact solution is not available for this problem")]
    MissingExactSolution,
}

pub type Result<T> = std::result::Result<T, Error>;
