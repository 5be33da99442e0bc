use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A constructor parameter is outside its valid range.
    #[error("invalid parameter `{field}`: {reason}")]
    Parameter { field: &'static str, reason: String },

    #[error("frequency {0} lies outside [-pi, pi]")]
    Domain(f64),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("grid size mismatch: {expected} vs {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("absolute continuity violated at support point {index}: {reason}")]
    AbsoluteContinuity { index: usize, reason: String },

    #[error(
        "members {first} and {second} are both dominated but differ by {max_diff:e}; \
         dominance tolerances are misconfigured"
    )]
    UniquenessViolation {
        first: usize,
        second: usize,
        max_diff: f64,
    },

    #[error("covariance built from `{label}` is not positive definite after jitter escalation")]
    NotPositiveDefinite { label: String },

    #[error("estimation infeasible: {0}")]
    EstimationInfeasible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config key `{key}`: {constraint}")]
    Config { key: String, constraint: String },

    #[error("io failure at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            constraint: constraint.into(),
        }
    }

    /// Wrap with the name of the pipeline stage that produced the error.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code: 2 for configuration errors, 3 for numerical
    /// failures, 4 for IO failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Config { .. } => 2,
            Error::Io { .. } => 4,
            _ => 3,
        }
    }
}
