use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape {0:?}: every extent must be >= 1")]
    InvalidShape(Vec<usize>),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("temporal depth error: kernel depth {kernel} exceeds input depth {input}")]
    Depth { kernel: usize, input: usize },

    #[error("state error: {0}")]
    State(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss is {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },

    #[error("undefined: {0}")]
    Undefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-parseable category used by the command-line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidShape(_) | Error::ShapeMismatch { .. } => "shape",
            Error::Depth { .. } => "depth",
            Error::State(_) => "state",
            Error::Config(_) => "config",
            Error::Range(_) => "range",
            Error::Format(_) => "format",
            Error::Parse { .. } => "parse",
            Error::Divergence { .. } => "divergence",
            Error::Undefined(_) => "undefined",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn mismatch(expected: &[usize], actual: &[usize]) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }
}
