use thiserror::Error;

use crate::baselines::LassoFit;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad shapes, violated preconditions, or malformed input data.
    #[error("input error: {0}")]
    Input(String),

    /// Coordinate descent hit its sweep limit; `last` is the final iterate.
    #[error("lasso did not converge after {sweeps} sweeps (lambda = {lambda})")]
    Convergence {
        sweeps: usize,
        lambda: f64,
        last: Box<LassoFit>,
    },

    #[error("parse error at row {row}, column {column:?}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    /// A rolling-window refit failed; `origin` is the zero-based row of the forecast origin.
    #[error("forecast failed at origin {origin} for {method}: {source}")]
    Window {
        origin: usize,
        method: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    /// True for errors caused by the caller's configuration or data rather than a runtime failure.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Json(_))
    }
}

macro_rules! ensure_input {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::Input(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure_input;
