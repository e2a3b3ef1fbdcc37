use thiserror::Error;

/// Errors raised by the estimation pipeline.
///
/// Variants split along the CLI exit-code boundary: [`Error::Validation`]
/// covers bad inputs and configurations, everything numerical lands in
/// [`Error::Numerical`] or one of its contextual wrappers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("newton iteration did not converge after {iterations} iterations (gradient sup-norm {grad_norm:.3e})")]
    NewtonDiverged { iterations: usize, grad_norm: f64 },

    #[error("singular covariance at window {window}")]
    SingularCovariance { window: usize },

    #[error("em iteration {iteration}, channel {channel}: {source}")]
    Em {
        iteration: usize,
        channel: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("taper {taper}: {source}")]
    Taper {
        taper: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// True when the root cause is a rejected input rather than a numerical
    /// breakdown.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Validation(_) | Error::Format(_) => true,
            Error::Em { source, .. } | Error::Taper { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
