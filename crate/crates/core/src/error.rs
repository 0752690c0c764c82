use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("output symbol {symbol} is outside the channel alphabet of size {alphabet}")]
    InvalidSymbol { symbol: usize, alphabet: usize },

    #[error("noise level {level} is not admissible for the {family} family")]
    InvalidNoise { level: f64, family: &'static str },

    #[error("continuity constant is unbounded at noise level {level}")]
    UnboundedContinuity { level: f64 },

    #[error("{what} = {value} is outside its domain")]
    Domain { what: &'static str, value: f64 },

    #[error("information density undefined: both conditional probabilities are zero")]
    UndefinedDensity,

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("exact enumeration over {t} users exceeds the cap of {max}; use Monte Carlo estimation")]
    CapacityExceeded { t: usize, max: usize },

    #[error("tuple scan needs C(M^d, {t}) = {tuples} evaluations, budget is {budget}")]
    Budget { t: usize, tuples: f64, budget: f64 },

    #[error("resource cap exceeded: need {required} bytes, cap is {cap}")]
    Resource { required: u64, cap: u64 },

    #[error("method unavailable: {0}")]
    MethodUnavailable(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error: 2 for resource and budget failures,
    /// 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Budget { .. } | Error::Resource { .. } | Error::CapacityExceeded { .. } => 2,
            _ => 1,
        }
    }
}
