//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failures reported by the numerical routines and the command-line driver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A special function was evaluated at one of its poles.
    #[error("argument {re}{im:+}i is a pole (non-positive integer)")]
    PoleArgument { re: f64, im: f64 },

    /// A parameter lies outside the interval documented for the operation.
    #[error("invalid parameter `{name}`: {detail}")]
    InvalidParameter { name: &'static str, detail: String },

    /// Adaptive quadrature ran out of subdivisions before meeting its tolerance.
    #[error("quadrature did not converge: value {value_re}{value_im:+}i, error estimate {err:e}")]
    NoConvergence { value_re: f64, value_im: f64, err: f64 },

    /// Two integration paths come closer than the separation floor.
    #[error("integration paths collide (separation {separation:e})")]
    PathCollision { separation: f64 },

    /// The kernel diagonal does not decay at the truncation point of a Fredholm grid.
    #[error("kernel diagonal does not decay: K({at},{at}) = {value:e}")]
    TailNonDecay { at: f64, value: f64 },

    /// A computed quantity violates an invariant that should hold by construction.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Trailing singular values fell below the reliable grading bound.
    #[error("only {reliable} of {required} leading log singular values are reliable")]
    Reliability { reliable: usize, required: usize },

    /// Invalid command-line or file configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Filesystem failure while writing artifacts.
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidParameter { name, detail: detail.into() }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
