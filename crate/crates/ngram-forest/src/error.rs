use std::path::PathBuf;

use ngram_forest_core::Error as CoreError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{path}:{line}: unknown label `{label}`")]
    UnknownLabel { path: PathBuf, line: usize, label: String },
    #[error("class `{label}` has {count} instances, need at least 3 to split")]
    SmallClass { label: String, count: usize },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },
    #[error("checkpoint tensor `{name}` has shape {found:?}, model expects {expected:?}")]
    TensorShape {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("checkpoint was written with {key} = {recorded}, requested {requested}")]
    ConfigMismatch {
        key: String,
        recorded: String,
        requested: String,
    },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    /// Process exit code: 1 usage, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Core(CoreError::Config(_)) => 1,
            Error::Core(CoreError::NonFinite(_) | CoreError::NotNormalized { .. }) => 3,
            _ => 2,
        }
    }
}
