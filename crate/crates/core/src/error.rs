use thiserror::Error;

use crate::expr::{EvalError, ParseError};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid element: {0}")]
    InvalidElement(String),

    /// A clipped cell came out with the wrong winding; the element's cell list is malformed.
    #[error("inconsistent cell orientation: {0}")]
    Orientation(String),

    #[error("dimension {got} is outside the supported range {min}..={max}")]
    Dimension { got: usize, min: usize, max: usize },

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("lattice mismatch: {0}")]
    LatticeMismatch(String),

    #[error("broken symmetry: {0}")]
    Symmetry(String),

    #[error("parse error: {0}")]
    Parse(#[from] ParseError),

    #[error("evaluation of {context} failed: {source}")]
    Eval {
        context: String,
        #[source]
        source: EvalError,
    },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for failures of the numerics (solver breakdown, blow-up) as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonConvergence { .. } | Error::NonFinite { .. } => true,
            Error::Step { source, .. } => source.is_numerical(),
            Error::Eval { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
