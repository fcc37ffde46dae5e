use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by every stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schedule parameters: {0}")]
    InvalidScheduleParams(String),

    #[error("step {t} out of range 0..={steps}")]
    StepOutOfRange { t: usize, steps: usize },

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("found {found} line(s), wanted {wanted}")]
    NoLinesFound { found: usize, wanted: usize },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("correlation undefined: {0}")]
    DegenerateInput(String),

    #[error("region of interest out of bounds: {0}")]
    RoiOutOfBounds(String),

    #[error("timestamp mismatch: {0}")]
    TimestampMismatch(String),

    #[error("non-finite score at step {t}")]
    NonFiniteScore { t: usize },

    #[error("non-finite diffusion state at step {t}")]
    NonFiniteState { t: usize },

    #[error("window {window} does not fit a {height}x{width} image")]
    WindowTooLarge {
        window: usize,
        height: usize,
        width: usize,
    },

    #[error("invalid SSIM parameters: {0}")]
    InvalidSsimParams(String),

    #[error("empty list")]
    EmptyList,

    #[error("invalid tuning grid: {0}")]
    InvalidGrid(String),

    #[error("candidate {candidate}, pair {pair}: {source}")]
    Tuning {
        candidate: String,
        pair: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("infeasible corpus spec: {0}")]
    SpecInfeasible(String),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(expected: (usize, usize), found: (usize, usize)) -> Self {
        Error::ShapeMismatch { expected, found }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
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
