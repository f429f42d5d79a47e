use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("chain initialization failed: no finite log density after {attempts} attempts")]
    Initialization { attempts: usize },

    #[error("sampler failure: {0}")]
    Sampler(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
