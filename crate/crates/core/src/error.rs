//! Error taxonomy shared by every pipeline stage. The CLI maps variants to
//! process exit codes, so keep the classification stable.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Rejected configuration value or constructor argument.
    #[error("config: {0}")]
    Config(String),

    /// Grids, volumes, or transforms that do not fit together.
    #[error("geometry: {0}")]
    Geometry(String),

    /// Index or buffer length out of range.
    #[error("shape: {0}")]
    Shape(String),

    /// A stage was run before the stage that produces its inputs.
    #[error("stage `{stage}` needs {path}; run `{needs}` first")]
    MissingStage {
        stage: String,
        needs: String,
        path: PathBuf,
    },

    /// Data-dependent failure: empty overlap, all-void input, rule conflict.
    #[error("data: {0}")]
    Data(String),

    /// Non-finite loss, degenerate histogram, or other numerical breakdown.
    #[error("numerical: {0}")]
    Numerical(String),

    /// Malformed file on disk.
    #[error("format: {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn geometry(msg: impl Into<String>) -> Self {
        Error::Geometry(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn missing_stage(
        stage: impl Into<String>,
        needs: impl Into<String>,
        path: impl Into<PathBuf>,
    ) -> Self {
        Error::MissingStage {
            stage: stage.into(),
            needs: needs.into(),
            path: path.into(),
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Exit code contract: 2 config, 3 missing stage input, 4 numerical,
    /// 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::MissingStage { .. } => 3,
            Error::Numerical(_) => 4,
            _ => 1,
        }
    }
}
