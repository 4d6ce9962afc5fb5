use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("class shares sum to {sum}, expected 1")]
    ShareSum { sum: f64 },
    #[error("share {value} of class {class} is outside (0, 1)")]
    ShareRange { class: usize, value: f64 },
    #[error("no traffic classes configured")]
    EmptyClassSet,
    #[error("no priority levels configured")]
    EmptyPrioritySet,
    #[error("timer of priority {priority} is {value}, must be > 0")]
    NonPositiveTimer { priority: usize, value: f64 },
    #[error("watermark of priority {priority} is {value}, must be >= 1")]
    InvalidWatermark { priority: usize, value: f64 },
    #[error("{what}: expected {expected} entries, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid capacity profile: {0}")]
    InvalidCapacity(String),
    #[error("time went backwards: {now} < {last}")]
    TimeRegression { now: f64, last: f64 },
    #[error("offer class {class} is not below the class count {classes}")]
    UnknownClass { class: usize, classes: usize },
    #[error("offer priority {priority} is not below the priority count {priorities}")]
    UnknownPriority { priority: usize, priorities: usize },
    #[error("probe step must be > 0, got {0}")]
    NonPositiveStep(f64),
    #[error("every class intensity is zero")]
    AllZeroIntensity,
    #[error("invalid priority mix: {0}")]
    InvalidMix(String),
    #[error("invalid intensity profile: {0}")]
    InvalidProfile(String),
    #[error("non-monotone timestamps at record {index}: {t} after {prev}")]
    NonMonotoneTimestamps { index: usize, t: f64, prev: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
