use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit codes used by the command-line tool.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERICAL: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    /// Malformed file content. `line` is 1-based and counts the header.
    #[error("{path}:{line}{}: {message}", field.as_ref().map(|f| format!(" field `{f}`")).unwrap_or_default())]
    Format {
        path: PathBuf,
        line: u64,
        field: Option<String>,
        message: String,
    },
    #[error("{path}: unsupported {what} schema version {found} (expected {expected})")]
    Version {
        path: PathBuf,
        what: &'static str,
        found: u32,
        expected: u32,
    },
    #[error("replay mismatch: {0}")]
    Replay(String),
    #[error(transparent)]
    Core(#[from] carsfit_core::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            line,
            field: None,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        use carsfit_core::Error as C;
        match self {
            Error::Usage(_) => exit::USAGE,
            Error::Core(
                C::IllConditioned { .. }
                | C::NotPositiveDefinite
                | C::NonFinite(_)
                | C::NoViableGamma,
            ) => exit::NUMERICAL,
            _ => exit::DATA,
        }
    }
}
