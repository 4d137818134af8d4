use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{operation}: {source}")]
    Numerical { operation: String, source: chargecorr::Error },
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    /// Bad input from the caller is a usage error; conditioning and
    /// convergence failures are numerical.
    pub fn numerical(operation: impl Into<String>, source: chargecorr::Error) -> Self {
        use chargecorr::Error as E;
        let operation = operation.into();
        match source {
            E::InvalidParameter(_) | E::Contract(_) | E::Domain(_) => CliError::Usage(format!("{operation}: {source}")),
            _ => CliError::Numerical { operation, source },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical { .. } => 3,
            CliError::Io(_) => 1,
        }
    }
}
