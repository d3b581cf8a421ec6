use std::fmt;

use thiserror::Error;

/// Validation failure located by a dotted field path such as `components[3].delta`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot aggregate over an empty group `{0}`")]
    EmptyAggregate(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration at {0}")]
    Config(#[from] ConfigError),

    #[error("illegal state: {0}")]
    IllegalState(String),

    #[error("policy contract violated at step {step}: {message}")]
    PolicyContract { step: u32, message: String },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("log is truncated or corrupt after step {last_good_step:?}: {message}")]
    PartialLog {
        last_good_step: Option<u32>,
        message: String,
    },

    #[error("unsupported format version {found} (this build reads up to {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("unknown scenario `{name}`; valid names: {}", valid.join(", "))]
    UnknownScenario { name: String, valid: Vec<String> },

    #[error("unknown policy descriptor `{0}`")]
    UnknownPolicy(String),

    #[error("road network row {row}: {message}")]
    RoadNetwork { row: usize, message: String },

    #[error("benchmark run {run} failed: {source}")]
    Run {
        run: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
