use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("memory parameter alpha = {0} outside the open interval (-1/3, 1)")]
    InvalidAlpha(f64),

    #[error("replay probability p = {0} outside [0, 1]")]
    InvalidMemoryParam(f64),

    #[error("{what} = {value} out of range ({expected})")]
    OutOfRange {
        what: &'static str,
        value: String,
        expected: String,
    },

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("non-positive likelihood factor {factor} at window step {step}")]
    NonpositiveFactor { step: usize, factor: f64 },

    #[error("only {accepted} conditioned prefixes accepted (need at least {required})")]
    InsufficientConditioningSamples { accepted: usize, required: usize },

    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    #[error("malformed trajectory data: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn out_of_range(
    what: &'static str,
    value: impl ToString,
    expected: impl ToString,
) -> Error {
    Error::OutOfRange {
        what,
        value: value.to_string(),
        expected: expected.to_string(),
    }
}
