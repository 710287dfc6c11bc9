use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures of the file, configuration and pipeline layer.
///
/// Every message starts with the module that raised it so that a CLI user can
/// tell which stage rejected the input.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{source} [{}]", location(path, *row))]
    Core {
        path: PathBuf,
        row: Option<usize>,
        source: vfair_core::Error,
    },
    #[error(transparent)]
    CoreBare(#[from] vfair_core::Error),
    #[error("io: {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("format: {}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("wav: {}: {msg}", path.display())]
    Wav { path: PathBuf, msg: String },
    #[error("config: {0}")]
    Config(String),
    #[error("report: {0}")]
    Report(String),
    #[error(
        "cli: stage `{stage}` has not produced {} yet; run `vfair {stage}` first",
        path.display()
    )]
    MissingStage { stage: &'static str, path: PathBuf },
    #[error(
        "cli: refusing to overwrite {} with different content; pass --force to replace it",
        path.display()
    )]
    Overwrite { path: PathBuf },
}

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn format(path: &Path, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.to_path_buf(),
            msg: msg.into(),
        }
    }

    pub(crate) fn core(path: &Path, source: impl Into<vfair_core::Error>) -> Self {
        Error::Core {
            path: path.to_path_buf(),
            row: None,
            source: source.into(),
        }
    }

    pub(crate) fn core_at(path: &Path, row: usize, source: impl Into<vfair_core::Error>) -> Self {
        Error::Core {
            path: path.to_path_buf(),
            row: Some(row),
            source: source.into(),
        }
    }

    /// The core error underneath, when there is one.
    pub fn as_core(&self) -> Option<&vfair_core::Error> {
        match self {
            Error::Core { source, .. } | Error::CoreBare(source) => Some(source),
            _ => None,
        }
    }
}

fn location(path: &Path, row: Option<usize>) -> String {
    match row {
        Some(row) => format!("{}, row {row}", path.display()),
        None => path.display().to_string(),
    }
}
