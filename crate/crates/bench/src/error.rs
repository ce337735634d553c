use std::path::PathBuf;

use thiserror::Error;

/// Harness errors; each maps to a process exit code.
#[derive(Debug, Error)]
pub enum BenchError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {reason}", path.display())]
    Malformed { path: PathBuf, reason: String },

    #[error("numeric: {0}")]
    Numeric(String),
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

impl BenchError {
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Usage(_) => 2,
            BenchError::Config(_) => 3,
            BenchError::Io { .. } | BenchError::Malformed { .. } => 4,
            BenchError::Numeric(_) => 5,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<evs_core::Error> for BenchError {
    fn from(e: evs_core::Error) -> Self {
        use evs_core::Error as E;
        match e {
            E::Numeric(_) | E::Training { .. } => BenchError::Numeric(e.to_string()),
            E::Io(source) => BenchError::Io {
                path: PathBuf::from("<stream>"),
                source,
            },
            E::Format { .. } => BenchError::Malformed {
                path: PathBuf::from("<stream>"),
                reason: e.to_string(),
            },
            _ => BenchError::Config(e.to_string()),
        }
    }
}

/// Attaches `path` to file-level core errors.
pub(crate) fn at_path(path: &std::path::Path) -> impl FnOnce(evs_core::Error) -> BenchError + '_ {
    move |e| match e {
        evs_core::Error::Io(source) => BenchError::io(path, source),
        evs_core::Error::Format { .. } => BenchError::Malformed {
            path: path.to_path_buf(),
            reason: e.to_string(),
        },
        other => other.into(),
    }
}
