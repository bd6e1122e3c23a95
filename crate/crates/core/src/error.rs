use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("numeric error{}: {message}", fmt_iteration(.iteration))]
    Numeric {
        iteration: Option<usize>,
        message: String,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn fmt_iteration(iteration: &Option<usize>) -> String {
    match iteration {
        Some(i) => format!(" at iteration {i}"),
        None => String::new(),
    }
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric {
            iteration: None,
            message: msg.into(),
        }
    }

    pub fn format(what: &'static str, msg: impl Into<String>) -> Self {
        Error::Format {
            what,
            message: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches an iteration index to numeric errors that lack one.
    pub fn at_iteration(self, i: usize) -> Self {
        match self {
            Error::Numeric {
                iteration: None,
                message,
            } => Error::Numeric {
                iteration: Some(i),
                message,
            },
            other => other,
        }
    }
}
