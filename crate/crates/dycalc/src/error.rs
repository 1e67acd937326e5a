use thiserror::Error;

/// Errors reported by every module of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("scale overflow: level {level} exceeds the window maximum {l_max}")]
    ScaleOverflow { level: i32, l_max: i32 },
    #[error("scale underflow: level {level} is below the window minimum {l_min}")]
    ScaleUnderflow { level: i32, l_min: i32 },
    #[error("cube at the finest level {0} has no children")]
    NoChildren(i32),
    #[error("cube is not part of the grid")]
    NotInGrid,
    #[error("grid mismatch between operands")]
    GridMismatch,
    #[error("space mismatch: {0}")]
    SpaceMismatch(String),
    #[error("key violates the complexity constraint: {0}")]
    Complexity(String),
    #[error("index constraint violated: {0}")]
    IndexConstraint(String),
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
