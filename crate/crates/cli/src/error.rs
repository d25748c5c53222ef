use thiserror::Error;

/// Failures of a command, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid configuration, flags or input files. Exit code 2.
    #[error("configuration error: {0}")]
    Config(String),
    /// A computation failed or a check did not pass. Exit code 3.
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Failure(_) => 3,
        }
    }
}
