use thiserror::Error;

/// Errors raised by the solvers, estimators and experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical blow-up at t = {t}: {detail}")]
    BlowUp { t: f64, detail: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("Monte-Carlo underflow: {0}")]
    McUnderflow(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn blow_up(t: f64, detail: impl Into<String>) -> Self {
        Error::BlowUp { t, detail: detail.into() }
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { path: path.into(), message: message.into() }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidInput(_) | Error::Unsupported(_) => 2,
            Error::BlowUp { .. } => 3,
            Error::McUnderflow(_) => 4,
            Error::GridMismatch(_) | Error::Io(_) | Error::Json(_) => 1,
        }
    }
}
