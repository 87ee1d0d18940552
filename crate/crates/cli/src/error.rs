use thiserror::Error;

/// CLI-level errors, bucketed by exit code: config (1), data (2),
/// numerical (3).
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<quantot_core::Error> for CliError {
    fn from(err: quantot_core::Error) -> Self {
        use quantot_core::Error as E;
        match err {
            E::Io { .. } | E::Parse { .. } | E::EmptyInput(_) | E::InvalidWeights(_) => {
                CliError::Data(err.to_string())
            }
            E::Numerical { .. } => CliError::Numerical(err.to_string()),
            _ => CliError::Config(err.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
