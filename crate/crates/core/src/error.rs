use crate::gaussian::BasisId;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("basis mode {0} is not registered in this state")]
    UnknownBasis(BasisId),
    #[error("mode index {mode} out of range for a {len}-mode state")]
    ModeOutOfRange { mode: usize, len: usize },
    #[error("two-mode operation needs distinct modes, got {0} twice")]
    SameMode(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("shot-noise level undefined for an expression without quadrature terms")]
    UndefinedSnl,
    #[error("feedforward gains are singular at theta2 = {theta2} rad")]
    SingularFeedforward { theta2: f64 },
    #[error("size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("matrix is singular: {0}")]
    Singular(&'static str),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("emission failed: {0}")]
    Emit(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
