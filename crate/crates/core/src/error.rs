use thiserror::Error;

/// Errors produced by the analytic, optimization and simulation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A computed probability left [0, 1] by more than the allowed slack.
    #[error("internal consistency error: {what} = {value} is outside [0, 1]")]
    Consistency { what: String, value: f64 },

    /// The unbiased solver was called with group biases that differ.
    #[error("bias mismatch: the unbiased solver needs equal biases, got {0:?}")]
    BiasMismatch(Vec<f64>),

    /// The projection matrix of the equality constraints could not be formed.
    #[error("singular projection: {0}")]
    SingularProjection(String),

    /// An iterative solver ran out of iterations.
    #[error("no convergence after {iterations} iterations at x = {x_bar} (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        x_bar: f64,
        residual: f64,
    },

    /// A Monte-Carlo estimate was conditioned on an event that never occurred.
    #[error("degenerate estimate: {0}")]
    DegenerateEstimate(String),

    /// Malformed or inconsistent experiment configuration.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
