use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("{what} outside its domain: {value:?}")]
    OutOfDomain { what: &'static str, value: Vec<f64> },
    #[error("empty grid: step {mu} is too coarse for {bounds}")]
    EmptyGrid { mu: f64, bounds: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
