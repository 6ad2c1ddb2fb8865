use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    /// Malformed input: bad parameters, invalid systems, unparsable specs.
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    /// A cost guard tripped before any work was done.
    #[error("budget exceeded: {what} needs {needed} operations, budget is {budget}")]
    Budget {
        what: String,
        needed: u128,
        budget: u128,
    },

    /// The floating or fixed-point path cannot certify the requested result.
    #[error("precision insufficient: {0}")]
    Precision(String),

    #[error("no solution: {0}")]
    NoSolution(String),

    /// A provably nonnegative accumulation came out clearly negative.
    #[error("negative accumulation {value:e} in {what}")]
    Negative { what: String, value: f64 },

    #[error("iteration cap of {cap} rounds reached")]
    IterationCap { cap: usize },
}

impl LabError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        LabError::Invalid(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Budget { .. } | LabError::Precision(_) | LabError::IterationCap { .. } => 3,
            _ => 2,
        }
    }
}
