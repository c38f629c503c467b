use thiserror::Error;

/// Process exit statuses. Every run ends in exactly one of these.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    ConfigError = 2,
    NumericError = 3,
    ValidationFail = 4,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("numeric error: {0}")]
    Numeric(#[from] svexp_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl ToString) -> Self {
        CliError::Config {
            key: key.into(),
            message: message.to_string(),
        }
    }

    pub fn exit_status(&self) -> ExitStatus {
        match self {
            CliError::Config { .. } => ExitStatus::ConfigError,
            CliError::Numeric(_) | CliError::Io(_) => ExitStatus::NumericError,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
