use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// A config or manifest document that does not parse.
    #[error("{}: {msg}", path.display())]
    Parse { path: PathBuf, msg: String },
    /// A bad record in a data file; `line` is 1-based.
    #[error("{}:{line}: {msg}", path.display())]
    Record { path: PathBuf, line: u64, msg: String },
    #[error(transparent)]
    Core(#[from] orsa_core::Error),
    #[error("{0}")]
    Invalid(String),
    #[error("{}: missing artifacts: {}", dir.display(), missing.join(", "))]
    Incomplete { dir: PathBuf, missing: Vec<String> },
    #[error("{}: checksum mismatch (manifest {expected}, file {actual})", path.display())]
    Checksum {
        path: PathBuf,
        expected: String,
        actual: String,
    },
}

impl Error {
    /// Short machine-readable category, printed before the message.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Record { .. } => "record",
            Error::Core(_) => "validation",
            Error::Invalid(_) => "validation",
            Error::Incomplete { .. } => "incomplete",
            Error::Checksum { .. } => "checksum",
        }
    }

    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
        move |source| Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn parse(path: &Path, msg: impl ToString) -> Error {
        Error::Parse {
            path: path.to_path_buf(),
            msg: msg.to_string(),
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Error {
        Error::Invalid(msg.into())
    }
}
