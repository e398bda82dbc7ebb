use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    DimensionMismatch {
        expected: usize,
        found: usize,
    },
    NonFinite {
        what: &'static str,
    },
    InvalidParameter {
        name: &'static str,
        reason: String,
    },
    /// Iterative solver gave up; `history` holds the residual norm of every accepted iterate.
    NonConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    /// A time step failed; wraps the solver error together with the step index.
    Step {
        step: usize,
        source: Box<Error>,
    },
    /// The H-norm exceeded the blow-up threshold or became non-finite.
    BlowUp {
        step: usize,
        norm: f64,
        last_state: Vec<f64>,
    },
    Singular {
        what: &'static str,
    },
    GridMismatch,
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::NonFinite { what } => write!(f, "non-finite value in {what}"),
            Error::InvalidParameter { name, reason } => {
                write!(f, "invalid parameter `{name}`: {reason}")
            }
            Error::NonConvergence {
                iterations,
                residual,
                ..
            } => write!(
                f,
                "solver did not converge after {iterations} iterations (residual {residual:e})"
            ),
            Error::Step { step, source } => write!(f, "step {step} failed: {source}"),
            Error::BlowUp { step, norm, .. } => {
                write!(f, "blow-up at step {step} (H-norm {norm:e})")
            }
            Error::Singular { what } => write!(f, "singular {what}"),
            Error::GridMismatch => write!(f, "time grids do not match"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, v: &[f64]) -> Result<()> {
    if v.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: v.len(),
        });
    }
    Ok(())
}

pub(crate) fn check_finite(what: &'static str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what })
    }
}
