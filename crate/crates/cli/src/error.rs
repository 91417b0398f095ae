use std::path::PathBuf;
use std::process::ExitCode;

use fcul_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid argument: {0}")]
    Usage(String),

    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{failed} of {total} properties failed")]
    VerifyFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    /// Stable process exit codes.
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::VerifyFailed { .. } => 1,
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Invariant(_) => 4,
        })
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidArgument(m) => CliError::Usage(m),
            CoreError::Io(m) | CoreError::Wire(m) => CliError::Io {
                path: PathBuf::new(),
                message: m,
            },
            // Anything else escaping a run means the engine broke a guarantee.
            other => CliError::Invariant(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_errors_map_to_documented_codes() {
        let code = |e: CoreError| CliError::from(e).exit_code();
        assert_eq!(code(CoreError::InvalidArgument("x".into())), ExitCode::from(2));
        assert_eq!(code(CoreError::Io("x".into())), ExitCode::from(3));
        assert_eq!(code(CoreError::Invariant("x".into())), ExitCode::from(4));
        assert_eq!(code(CoreError::NotSpd { index: 0, pivot: -1.0 }), ExitCode::from(4));
        let failed = CliError::VerifyFailed { failed: 1, total: 2 };
        assert_eq!(failed.exit_code(), ExitCode::from(1));
    }
}
