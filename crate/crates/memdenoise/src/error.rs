use std::io;
use std::path::PathBuf;

use memdenoise_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}: bad magic number {found:#010x}, expected {expected:#010x}", path.display())]
    BadMagic { path: PathBuf, found: u32, expected: u32 },

    #[error("{}: truncated, need {expected} bytes but the file has {found}", path.display())]
    Truncated { path: PathBuf, expected: usize, found: usize },

    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("{}: {len} bytes is not a whole number of {record}-byte records", path.display())]
    RecordLength { path: PathBuf, len: usize, record: usize },

    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("{0}")]
    Usage(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing dependency: {0}")]
    Dependency(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Error {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Process exit status: 3 for divergence, 2 for invalid input or
    /// configuration, 1 for everything else (I/O on output paths).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(CoreError::Divergence { .. }) => 3,
            Error::Io { .. } | Error::Json(_) | Error::Csv(_) => 1,
            _ => 2,
        }
    }
}
