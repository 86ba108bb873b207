use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("distributions are defined over different supports")]
    SupportMismatch,

    #[error("invalid probability {value}: {reason}")]
    InvalidProbability { value: String, reason: String },

    #[error("distribution at {context} sums to {sum}, expected 1")]
    NotNormalized { context: String, sum: String },

    #[error("invalid scale {0}: e^eps must be at least 1")]
    InvalidScale(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("privacy loss is unbounded: {0}")]
    UnboundedEpsilon(String),

    #[error("configuration limit exceeded: {0}")]
    LimitExceeded(String),

    #[error("strategy is incompatible with the mechanism: {0}")]
    IncompatibleStrategy(String),

    #[error("malformed mechanism: {0}")]
    Malformed(String),

    #[error("mechanism is not ({eps_scale})-pure-DP at transcript {transcript}")]
    NotDpAtScale {
        eps_scale: String,
        transcript: String,
    },

    #[error("no valid eps_g: {0}")]
    NoSolution(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("parse error at {location}: {message}")]
    ParseAt { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse error class used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Computation,
    Invariant,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidProbability { .. }
            | Error::NotNormalized { .. }
            | Error::Malformed(_)
            | Error::NotDpAtScale { .. } => ErrorClass::Invariant,
            Error::Parse(_)
            | Error::ParseAt { .. }
            | Error::Io(_)
            | Error::InvalidParameter(_)
            | Error::InvalidScale(_) => ErrorClass::Usage,
            Error::SupportMismatch
            | Error::UnboundedEpsilon(_)
            | Error::LimitExceeded(_)
            | Error::IncompatibleStrategy(_)
            | Error::NoSolution(_) => ErrorClass::Computation,
        }
    }
}
