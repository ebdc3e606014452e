use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
///
/// Variants split into two families: input/validation problems (bad
/// distributions, malformed files, out-of-range parameters) and numerical
/// failures during training. [`Error::is_numerical`] tells them apart, which
/// the CLI uses to pick its exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("class count must be at least 2, got {0}")]
    TooFewClasses(usize),

    #[error("probability at index {index} is invalid: {value}")]
    InvalidProbability { index: usize, value: f64 },

    #[error("probabilities sum to {sum}, expected 1")]
    BadProbabilitySum { sum: f64 },

    #[error("class label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("class count mismatch: expected {expected}, got {actual}")]
    ClassCountMismatch { expected: usize, actual: usize },

    #[error("feature dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("alpha must lie strictly between 0 and 1, got {0}")]
    InvalidAlpha(f64),

    #[error("conformity score {value} at position {index} is outside [0, 1]")]
    InvalidScore { index: usize, value: f64 },

    #[error("{0} requires at least one case")]
    EmptyInput(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("rate undefined: {0}")]
    UndefinedRate(String),

    #[error("training data is degenerate: {0}")]
    DegenerateData(String),

    #[error("model is not trained")]
    Untrained,

    #[error("loss became non-finite at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Diverged { .. })
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
