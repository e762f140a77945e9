use thiserror::Error;

/// Errors raised by chain, noise, scheme and experiment routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A scheme asked for a Brownian value at a time that was never sampled.
    #[error("time {0} is not in the sampled time set")]
    MissingTime(f64),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("order fit failed: {0}")]
    Fit(String),

    #[error("config: {0}")]
    Config(String),

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidGenerator(_) | Error::InvalidArgument(_) | Error::Config(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
