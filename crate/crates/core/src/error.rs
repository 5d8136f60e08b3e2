use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameter `{name}`: {reason}")]
    Param { name: &'static str, reason: String },
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("degenerate case: {0}")]
    Degenerate(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("picard iteration did not contract (rate {rate:.4} after {retries} retries)")]
    NoContraction { rate: f64, retries: usize },
    #[error("picard iteration did not converge in {iterations} sweeps (last step {last_step:.3e})")]
    NoConvergence { iterations: usize, last_step: f64 },
    #[error("insufficient tail: {0}")]
    InsufficientTail(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Param {
        name,
        reason: reason.into(),
    }
}
