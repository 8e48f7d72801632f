use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("PLY header line {line}: {message}")]
    Header { line: usize, message: String },
    #[error("PLY body: expected {expected} vertices, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("PLY body: {0}")]
    Body(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] hpc_core::Error),
}

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
