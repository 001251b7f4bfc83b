use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the calibration and fusion pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("malformed stream: {0}")]
    MalformedStream(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("estimation failed: {0}")]
    EstimationFailed(String),

    #[error("essential decomposition failed: {0}")]
    DecompositionFailed(String),

    #[error("ill-conditioned triangulation: {0}")]
    IllConditioned(String),

    #[error("triangulated point behind camera: {0}")]
    BehindCamera(String),

    #[error("cluster matching failed: {0}")]
    MatchingFailed(String),

    #[error("degenerate scale: {0}")]
    DegenerateScale(String),

    #[error("coarse registration failed: {0}")]
    CoarseFailed(String),

    #[error("refinement failed: {0}")]
    RefineFailed(String),

    #[error("strategy outputs differ: {0}")]
    Correctness(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

/// Broad failure classes, used by the command line to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Configuration,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Configuration(_) => ErrorClass::Configuration,
            Error::InvalidArgument(_) | Error::MalformedStream(_) | Error::Io { .. } | Error::Format { .. } => {
                ErrorClass::Data
            }
            Error::DegenerateFit(_)
            | Error::EstimationFailed(_)
            | Error::DecompositionFailed(_)
            | Error::IllConditioned(_)
            | Error::BehindCamera(_)
            | Error::MatchingFailed(_)
            | Error::DegenerateScale(_)
            | Error::CoarseFailed(_)
            | Error::RefineFailed(_)
            | Error::Correctness(_) => ErrorClass::Numerical,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
