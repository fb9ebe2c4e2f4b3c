use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Why an external segmenter invocation was rejected.
#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("not_configured: no adapter command given")]
    NotConfigured,
    #[error("could not launch `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: io::Error,
    },
    #[error("adapter exited with {status}; stderr: {stderr}")]
    ExitFailure { status: String, stderr: String },
    #[error("geometry: adapter mask is {got_h}x{got_w}, image is {want_h}x{want_w}")]
    Geometry {
        want_h: usize,
        want_w: usize,
        got_h: usize,
        got_w: usize,
    },
    #[error("malformed mask: {0}")]
    MalformedMask(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] ipseg_core::Error),
    #[error("I/O error at byte offset {offset}: {source}")]
    Stream {
        offset: u64,
        #[source]
        source: io::Error,
    },
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("FormatError at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("AdapterError: {0}")]
    Adapter(#[from] AdapterError),
    #[error("usage: {0}")]
    Usage(String),
}

impl Error {
    pub fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, looking through file context.
    pub fn root(&self) -> &Error {
        match self {
            Error::File { source, .. } => source.root(),
            other => other,
        }
    }

    /// `2` for usage and configuration problems, `1` for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Usage(_) => 2,
            Error::Core(ipseg_core::Error::Param(_) | ipseg_core::Error::Geometry(_)) => 2,
            Error::Adapter(AdapterError::NotConfigured) => 2,
            _ => 1,
        }
    }
}
