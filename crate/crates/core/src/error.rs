use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape, field or precondition problems with caller-supplied data.
    #[error("input error: {0}")]
    Input(String),
    #[error("solver failure: {0}")]
    Solver(String),
    /// Two independent PSD oracles disagreed away from the decision boundary.
    #[error("inconsistent verdicts: {0}")]
    Inconsistency(String),
    /// A guaranteed bound was violated, which points at a numerical rank misjudgment.
    #[error("internal error: {0}")]
    Internal(String),
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
