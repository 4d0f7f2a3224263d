use std::fmt;

/// Failure of a command, split by who has to fix it.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configuration or input files. Exit code 1.
    User(String),
    /// A bug or an unexpected numerical failure. Exit code 2.
    Internal(String),
}

impl CliError {
    pub fn user(msg: impl Into<String>) -> Self {
        CliError::User(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::User(m) => f.write_str(m),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<bnmf::Error> for CliError {
    fn from(e: bnmf::Error) -> Self {
        use bnmf::Error as E;
        match e {
            E::NonPositivePrediction { .. } | E::ArdDisabled => CliError::Internal(e.to_string()),
            other => CliError::User(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}
