use std::io;
use std::path::{Path, PathBuf};

use winoprobe_core::bridge::BridgeError;
use winoprobe_core::lexicon::LexiconError;
use winoprobe_core::pmi::PmiError;
use winoprobe_core::schema::SchemaError;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Violations = 1,
    Input = 2,
    Adapter = 3,
}

impl ExitStatus {
    pub fn code(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{file}:{line}: {message}")]
    Format { file: String, line: usize, message: String },
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("lexicon bundle: {0}")]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Pmi(#[from] PmiError),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Missing(String),
    #[error("output directory {0} is locked by another run")]
    Locked(PathBuf),
    #[error("{0}")]
    Adapter(String),
    #[error("{0}")]
    Domain(String),
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        Error::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn format(source: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Format { file: source.into(), line, message: message.into() }
    }

    pub fn status(&self) -> ExitStatus {
        match self {
            Error::Bridge(_) | Error::Adapter(_) => ExitStatus::Adapter,
            Error::Domain(_) => ExitStatus::Violations,
            _ => ExitStatus::Input,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
