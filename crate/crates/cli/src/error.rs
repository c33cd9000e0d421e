use thiserror::Error;

use finmet_core::Error as CoreError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    /// Wraps a core error with a description of what was being done.
    pub fn core(context: impl std::fmt::Display, e: CoreError) -> Self {
        let msg = format!("{context}: {e}");
        match e {
            CoreError::Convergence { .. }
            | CoreError::Fit { .. }
            | CoreError::Consistency { .. }
            | CoreError::Conditioning { .. } => CliError::Numerical(msg),
            CoreError::Format(_) => CliError::Io(msg),
            _ => CliError::Config(msg),
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
        CliError::Io(e.to_string())
    }
}
