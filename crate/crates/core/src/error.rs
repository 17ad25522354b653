use std::path::PathBuf;

use thiserror::Error;

use crate::video::Dims;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: cannot decode image: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("{path}: frame is {found} but earlier frames are {expected}")]
    FrameDims {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}: no frames found")]
    NoFrames { path: PathBuf },
    #[error("{path}: malformed y4m stream: {message}")]
    Y4m { path: PathBuf, message: String },
    #[error("{path}: malformed dump: {message}")]
    Dump { path: PathBuf, message: String },
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: Dims, right: Dims },
    #[error("invalid Zernike index (n={n}, m={m})")]
    InvalidMoment { n: u32, m: u32 },
    #[error("video {dims} is too small: {reason}")]
    TooSmall { dims: Dims, reason: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("forgery does not fit the video: {0}")]
    Forgery(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
