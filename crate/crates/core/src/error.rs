use thiserror::Error;

use crate::problem::PenaltyKind;

#[derive(Debug, Error)]
pub enum UotError {
    #[error("flat index {index} out of range for a {n}x{m} problem")]
    IndexOutOfRange { index: usize, n: usize, m: usize },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dual point violates the constraint of entry {index} by {violation:e}")]
    InfeasibleDual { index: usize, violation: f64 },

    #[error("residuals rescaling degenerates at entry {index}: zero cost with positive dual sum")]
    DegenerateRescaling { index: usize },

    #[error("{what} is not supported for the {penalty} penalty")]
    Unsupported { what: String, penalty: PenaltyKind },

    #[error("safe region requires positive curvature, got {0}")]
    NoCurvature(f64),

    #[error("entry {0} is already screened")]
    AlreadyScreened(usize),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("oracle unavailable: {0}")]
    OracleUnavailable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, UotError>;
