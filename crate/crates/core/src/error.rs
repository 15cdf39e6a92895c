use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument `{field}`: {reason}")]
    InvalidArgument { field: &'static str, reason: String },

    #[error("length mismatch for {what}: need at least {needed}, got {got}")]
    LengthMismatch {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("regression at step {step} (action {action}) is singular after ridge escalation to lambda={lambda:e}")]
    SingularRegression {
        step: usize,
        action: usize,
        lambda: f64,
    },

    #[error("no exploration samples for grid action {action} at step {step}")]
    EmptyActionCell { step: usize, action: usize },

    #[error("non-finite payoff {value} on path {path}")]
    NonFinitePayoff { path: usize, value: f64 },

    #[error("non-finite fitted value at step {step} on path {path}")]
    NonFiniteValue { step: usize, path: usize },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            field,
            reason: reason.into(),
        }
    }
}
