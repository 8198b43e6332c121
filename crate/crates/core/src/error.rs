use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {actual})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("index {index} out of range for {what} of size {len}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },
    #[error("degenerate gradient: control point is {distance:.3e} m from obstacle '{obstacle}'")]
    DegenerateGradient { obstacle: String, distance: f64 },
    #[error("over-constrained stack: augmented Jacobian has {rows} rows for {joints} joints")]
    OverConstrained { rows: usize, joints: usize },
    #[error("hard limit breach on task '{task}': value {value} outside [{lower}, {upper}]")]
    HardLimitBreach {
        task: String,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("{active} active set-based tasks exceed the enumeration limit of {limit}")]
    CombinatorialLimit { active: usize, limit: usize },
    #[error("non-finite {what}")]
    NonFinite { what: &'static str },
    #[error("unknown object '{0}'")]
    UnknownObject(String),
    #[error("missing target for task '{0}'")]
    MissingTarget(String),
    #[error("grasp of '{object}' failed: tool is {distance:.4} m / {angle:.4} rad from the grasp pose")]
    GraspFailure {
        object: String,
        distance: f64,
        angle: f64,
    },
    #[error("no active attachment")]
    NotAttached,
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("i/o error on {path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn dims(what: &'static str, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            what,
            expected,
            actual,
        }
    }
}
