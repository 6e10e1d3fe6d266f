use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violated a documented precondition or invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// An iterative routine failed to converge, produced a non-finite value,
    /// or an equivalence check was breached.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed text input (weight files, CSV, emitted Verilog-A).
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
