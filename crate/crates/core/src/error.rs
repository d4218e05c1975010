use thiserror::Error;

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dimension mismatch: expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid probability space: {0}")]
    InvalidSpace(String),

    #[error("invalid random variable: {0}")]
    InvalidVariable(String),

    #[error("unknown outcome label `{0}`")]
    UnknownOutcome(String),

    #[error("rejection region has zero probability")]
    DegenerateRegion,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("{count} splits exceed the enumeration limit of {limit}")]
    EnumerationGuard { count: u128, limit: u128 },

    #[error("unknown calibrator `{0}`")]
    UnknownCalibrator(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed input: {0}")]
    Parse(String),
}

impl EvalError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        EvalError::Domain(msg.into())
    }

    /// True for errors caused by reading or decoding input files.
    pub fn is_io(&self) -> bool {
        matches!(self, EvalError::Io(_) | EvalError::Parse(_))
    }
}

impl From<serde_json::Error> for EvalError {
    /// Well-formed JSON that violates a type invariant is a domain error;
    /// anything else is a malformed input.
    fn from(err: serde_json::Error) -> Self {
        if err.is_data() {
            EvalError::Domain(err.to_string())
        } else {
            EvalError::Parse(err.to_string())
        }
    }
}
