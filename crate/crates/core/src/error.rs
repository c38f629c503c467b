use alloc::string::String;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An input violated a documented precondition.
    Domain(String),
    /// Adaptive quadrature ran out of panels before meeting its tolerance.
    Quadrature {
        value: f64,
        abs_error_estimate: f64,
        subdivisions: usize,
    },
    /// An iterative solver stopped without converging.
    NoConvergence { iterations: usize, last: f64 },
    /// A covariance matrix could not be factorized even after jitter.
    Factorization { index: usize, pivot: f64 },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for errors caused by bad inputs rather than numerical failure.
    pub fn is_domain(&self) -> bool {
        matches!(self, Error::Domain(_))
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Quadrature {
                value,
                abs_error_estimate,
                subdivisions,
            } => write!(
                f,
                "quadrature did not converge after {subdivisions} panels \
                 (partial value {value:e}, error estimate {abs_error_estimate:e})"
            ),
            Error::NoConvergence { iterations, last } => write!(
                f,
                "solver did not converge after {iterations} iterations (last iterate {last:e})"
            ),
            Error::Factorization { index, pivot } => write!(
                f,
                "covariance factorization failed at row {index} (pivot {pivot:e})"
            ),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
