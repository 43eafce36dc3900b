use thiserror::Error;

/// Configuration or parameter validation failure. `field` is the dotted
/// config path (e.g. `market.beta`).
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{field}: {rule}")]
pub struct ValidationError {
    pub field: String,
    pub rule: String,
}

impl ValidationError {
    pub fn new(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            rule: rule.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {source}")]
    Invalid {
        path: String,
        #[source]
        source: ValidationError,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("operation requires a pre-subscription state")]
    SubscribedState,
    #[error("state ({s}, {c}) lies outside the grid [0, {s_max}] x [0, {c_max}]")]
    OffGrid { s: u32, c: u32, s_max: u32, c_max: u32 },
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("value iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("instance too large for the enumeration oracle: {0}")]
    TooLarge(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("no solved policy table for type bin ({0}, {1})")]
    MissingBin(u32, u32),
    #[error("unknown {what} `{name}`")]
    Unknown { what: &'static str, name: String },
    #[error("event log is empty")]
    EmptyLog,
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StaticsError {
    #[error("precondition for `{param}` sweep not met: {reason}")]
    Precondition { param: String, reason: String },
    #[error("non-monotone sign pattern along {axis}: {pattern}")]
    NonMonotoneSign { axis: String, pattern: String },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnError {
    #[error("no {what} data at {coords}")]
    MissingBin { what: &'static str, coords: String },
    #[error("log line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("estimation needs at least one log record")]
    EmptyLog,
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}
