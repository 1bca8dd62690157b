use thiserror::Error;

/// Error type shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("malformed input: {0}")]
    Input(String),

    #[error("network structure error: {0}")]
    Structure(String),

    #[error("cut-set cap exceeded: {0}")]
    Capacity(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code associated with the error kind.
    ///
    /// 2 usage, 3 input format, 4 capacity, 5 internal contract violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) => 2,
            Error::Input(_) | Error::Structure(_) | Error::Io(_) | Error::Json(_) => 3,
            Error::Capacity(_) => 4,
            Error::Contract(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
