//! Error type shared by all solver components.

use thiserror::Error;

/// Errors raised by space construction, assembly, factorization and time stepping.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("evaluation point {0} outside the domain [0, 1]")]
    OutOfDomain(f64),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("singular matrix: zero pivot at elimination step {pivot}")]
    SingularMatrix { pivot: usize },

    #[error("discrete inf-sup failure: saddle system for test {test} / trial {trial} is singular (pivot {pivot})")]
    InfSupFailure {
        test: String,
        trial: String,
        pivot: usize,
    },

    #[error("non-finite field value at ({x}, {y})")]
    NonFiniteValue { x: f64, y: f64 },

    #[error("velocity blow-up at step {step}: |v|_L2 = {norm:.6e} exceeded bound {bound:.6e}")]
    BlowUp { step: usize, norm: f64, bound: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
