use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("scale mismatch: m={0} vs m={1}")]
    ScaleMismatch(u32, u32),
    #[error("invalid scale: {0}")]
    InvalidScale(String),
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("empty family: {0}")]
    Empty(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("no qualifying breakpoint found (profile: {profile})")]
    NoBreakpoint { profile: String },
    #[error("pipeline failure at stage `{stage}`: {detail}")]
    Pipeline { stage: String, detail: String },
}

impl Error {
    pub(crate) fn pipeline(stage: &str, detail: impl Into<String>) -> Self {
        Error::Pipeline {
            stage: stage.to_string(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
