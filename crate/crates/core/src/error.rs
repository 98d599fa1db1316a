use std::path::PathBuf;

/// Error categories shared by every module of the workbench.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error{}: {message}", location(.path, .line))]
    Parse {
        path: Option<PathBuf>,
        line: Option<u64>,
        message: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("state error: {0}")]
    State(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn location(path: &Option<PathBuf>, line: &Option<u64>) -> String {
    match (path, line) {
        (Some(p), Some(l)) => format!(" in {}:{}", p.display(), l),
        (Some(p), None) => format!(" in {}", p.display()),
        (None, Some(l)) => format!(" at line {l}"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn parse(path: Option<&std::path::Path>, line: Option<u64>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.map(|p| p.to_path_buf()),
            line,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
