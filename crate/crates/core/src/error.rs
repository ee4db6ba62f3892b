use thiserror::Error;

/// Failures raised by the solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} did not converge within {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("cost trajectory left the finite range at s = {at} (u = {value:e})")]
    Overflow { at: f64, value: f64 },

    #[error("cost ordering violated at s = {at}: {low} > {high}")]
    MonotonicityViolation { at: f64, low: f64, high: f64 },

    #[error("shooting found no root from {starts} starting duals")]
    NoRootFound { starts: usize },

    #[error("trajectory bound violated: max |u| = {observed} exceeds {bound}")]
    BoundViolation { observed: f64, bound: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unknown identifier `{0}`")]
    UnknownId(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn precondition<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Precondition(msg.into()))
}
