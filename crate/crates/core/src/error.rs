use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("input coordinate {0} is outside [0, 1]")]
    OutOfDomain(f64),

    #[error("value {0} is not finite")]
    NonFinite(f64),

    #[error("a point with u = {0} is already present")]
    DuplicateU(f64),

    #[error("slope is undefined at knot u = {0}")]
    AtKnot(f64),

    #[error("operation needs a non-empty point set")]
    EmptySet,

    #[error("operation needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("budget {budget} is below the current action {action}")]
    InfeasibleBudget { budget: f64, action: f64 },

    #[error("expected {expected} values, got {got}")]
    WrongCount { expected: usize, got: usize },

    #[error("learner used before its initial phase completed")]
    NotInitialized,

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("adversary illegal at trial {trial}: {reason}")]
    IllegalAdversary { trial: usize, reason: String },

    #[error("repeated query at x = {0}")]
    DuplicateQuery(f64),

    #[error("transcript is not finalized")]
    Unfinalized,

    #[error("sign pattern violated for subset {subset:?} at point {index}")]
    SignPattern { subset: Vec<usize>, index: usize },

    #[error("required degree exceeds cap {cap}: {detail}")]
    DegreeCap { cap: usize, detail: String },

    #[error("q-action of the point set is {0}, must be strictly below 1")]
    ActionNotBelowOne(f64),

    #[error("too many points: {got} > {max}")]
    TooManyPoints { got: usize, max: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
