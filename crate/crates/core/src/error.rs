use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    /// Invalid or missing configuration; `key` names the offending entry.
    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },
    /// A numerical operation could not produce a trustworthy result.
    #[error("numerical failure in {op}: {msg}")]
    Numerical { op: String, msg: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl LabError {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        LabError::Config { key: key.into(), msg: msg.into() }
    }

    pub fn numerical(op: impl Into<String>, msg: impl Into<String>) -> Self {
        LabError::Numerical { op: op.into(), msg: msg.into() }
    }

    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config { .. } => 2,
            LabError::Numerical { .. } => 3,
            LabError::Io(_) => 3,
        }
    }
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
