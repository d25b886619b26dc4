use crate::sim::SimError;

/// Command failure, split by process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments, bad input files or schema violations (exit code 1).
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    /// The estimator could not produce a finite answer (exit code 2).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 1,
            CliError::Numerical(_) => 2,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }
}

impl From<srosync::Error> for CliError {
    fn from(e: srosync::Error) -> Self {
        use srosync::Error as E;
        match e {
            E::SingularCovariance { .. } | E::SingularKkt { .. } | E::NonFinite { .. } => {
                CliError::Numerical(e.to_string())
            }
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Core(core) => core.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}
