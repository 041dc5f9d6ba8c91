use thiserror::Error;

/// Failures of a CLI command, each mapped to a stable exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at {location}: key '{key}': {message}")]
    Config {
        location: String,
        key: String,
        message: String,
    },

    #[error("{0}")]
    Usage(String),

    #[error("solver error: {0}")]
    Solver(vmsns::Error),

    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn config(location: impl Into<String>, key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            location: location.into(),
            key: key.into(),
            message: message.into(),
        }
    }

    /// 0 success, 2 config error, 3 solver failure, 4 I/O error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Usage(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<vmsns::Error> for CliError {
    fn from(e: vmsns::Error) -> Self {
        use vmsns::Error as E;
        let root = match &e {
            E::StepFailed { source, .. } => source.as_ref(),
            other => other,
        };
        match root {
            E::Io(m) => CliError::Io(m.clone()),
            E::Snapshot(m) => CliError::Io(format!("snapshot: {m}")),
            E::InvalidDegree(_)
            | E::InvalidSpec { .. }
            | E::DegenerateElement { .. }
            | E::InvalidQuadrature { .. }
            | E::InvalidParams { .. }
            | E::InvalidControls(_)
            | E::NotNested(_) => CliError::Usage(e.to_string()),
            _ => CliError::Solver(e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
