use thiserror::Error;

/// Errors raised by the analytic engines, the simulator and the spec parser.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot parse `{token}`: {reason}")]
    Parse { token: String, reason: String },

    /// P[X <= 0] must lie strictly inside (0, 1) for the process to regenerate.
    #[error("P[X <= 0] = {0} is outside (0, 1); the recursion does not regenerate")]
    Regeneration(f64),

    #[error("numerical integrity violated: {0}")]
    NumericalIntegrity(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("need at least {required} replications, got {got}")]
    InsufficientReplications { required: usize, got: usize },

    #[error("grid too short: {0}")]
    GridTooShort(String),

    #[error("loss of precision: {0}")]
    LossOfPrecision(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn parse(token: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            token: token.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_)
            | Error::Parse { .. }
            | Error::Regeneration(_)
            | Error::InsufficientReplications { .. } => 2,
            Error::NumericalIntegrity(_) | Error::GridTooShort(_) | Error::LossOfPrecision(_) => 3,
            Error::Capacity(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
