use std::path::PathBuf;

use thiserror::Error;
use uot_core::UotError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] UotError),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("IDX parse error at byte {offset}: {message}")]
    Idx { offset: usize, message: String },

    #[error("empty histogram: {0}")]
    EmptyHistogram(String),

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("did not converge: {0}")]
    NonConvergence(String),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for bad input, 3 for an unsupported
    /// solver/method/penalty combination, 4 for non-convergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Core(UotError::Unsupported { .. }) => 3,
            HarnessError::NonConvergence(_) => 4,
            HarnessError::Core(
                UotError::InvalidProblem(_)
                | UotError::Dimension { .. }
                | UotError::NonFinite(_)
                | UotError::Json(_)
                | UotError::Csv(_)
                | UotError::Io(_),
            )
            | HarnessError::Json(_)
            | HarnessError::Idx { .. }
            | HarnessError::EmptyHistogram(_)
            | HarnessError::InvalidPlan(_)
            | HarnessError::InvalidArgument(_)
            | HarnessError::Io { .. } => 2,
            HarnessError::Core(_) => 1,
        }
    }
}
