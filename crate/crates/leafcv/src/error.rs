//! Pipeline-level error type and process exit-code mapping.

use std::fmt;
use std::path::PathBuf;

#[derive(Debug)]
pub enum PipelineError {
    /// Bad flags, bad config, incompatible representation/model choices.
    Usage(String),
    /// Missing or malformed data: files, images, manifests, caches.
    Data(String),
    /// Training produced a non-finite loss.
    Diverged(String),
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl PipelineError {
    pub fn usage(msg: impl Into<String>) -> Self {
        PipelineError::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        PipelineError::Data(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage, 2 data, 3 numeric divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_) => 1,
            PipelineError::Data(_) | PipelineError::Io { .. } => 2,
            PipelineError::Diverged(_) => 3,
        }
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PipelineError::Usage(m) => write!(f, "usage error: {m}"),
            PipelineError::Data(m) => write!(f, "data error: {m}"),
            PipelineError::Diverged(m) => write!(f, "numeric divergence: {m}"),
            PipelineError::Io { path, source } => {
                write!(f, "io error on {}: {source}", path.display())
            }
        }
    }
}

impl std::error::Error for PipelineError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            PipelineError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;
