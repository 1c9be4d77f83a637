use thiserror::Error;

/// Failure of a subcommand, classified by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Assertion(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Assertion(_) => 5,
        }
    }
}

impl From<dymon::Error> for CliError {
    fn from(e: dymon::Error) -> Self {
        match e {
            dymon::Error::Io(io) => CliError::Io(io.to_string()),
            dymon::Error::Numeric(msg) => CliError::Numeric(msg),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            CliError::Io(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
