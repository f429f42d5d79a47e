use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Exit status for invalid configuration or data.
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_SAMPLER: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] spmrf::Error),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        use spmrf::Error as E;
        match self {
            CliError::Core(E::Initialization { .. } | E::Sampler(_)) => EXIT_SAMPLER,
            CliError::Core(E::Io(_)) | CliError::Io(_) => EXIT_IO,
            CliError::Core(E::Csv(e)) | CliError::Csv(e) if e.is_io_error() => EXIT_IO,
            CliError::Json(e) if e.is_io() => EXIT_IO,
            _ => EXIT_VALIDATION,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_error_kind() {
        let core = |e: spmrf::Error| CliError::from(e).exit_code();
        assert_eq!(core(spmrf::Error::InvalidInput("x".into())), EXIT_VALIDATION);
        assert_eq!(core(spmrf::Error::LengthMismatch { expected: 1, found: 2 }), EXIT_VALIDATION);
        assert_eq!(core(spmrf::Error::Degenerate("x".into())), EXIT_VALIDATION);
        assert_eq!(core(spmrf::Error::Unsupported("x".into())), EXIT_VALIDATION);
        assert_eq!(core(spmrf::Error::Initialization { attempts: 10 }), EXIT_SAMPLER);
        assert_eq!(core(spmrf::Error::Sampler("x".into())), EXIT_SAMPLER);
        assert_eq!(core(std::io::Error::other("x").into()), EXIT_IO);
        assert_eq!(CliError::config("x").exit_code(), EXIT_VALIDATION);
        let bad_json = serde_json::from_str::<u8>("[").unwrap_err();
        assert_eq!(CliError::from(bad_json).exit_code(), EXIT_VALIDATION);
    }
}
