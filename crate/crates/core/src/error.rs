use std::path::PathBuf;

use thiserror::Error;

use crate::world::WorldState;

pub type Result<T, E = PlmError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PlmError {
    #[error("constellation size mismatch: {left} vs {right} landmarks")]
    ConstellationMismatch { left: usize, right: usize },

    #[error("degenerate point set: {0}")]
    RankDeficient(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("infeasible scene: {0}")]
    InfeasibleScene(String),

    #[error("no force-closure contact set found after {attempts} attempts")]
    NoFeasibleContacts { attempts: usize },

    #[error("simulation diverged at t = {t:.4} s")]
    Diverged { t: f64, last_valid: Box<WorldState> },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("corrupt checkpoint {path}: {reason}")]
    CorruptCheckpoint { path: PathBuf, reason: String },

    #[error("{path}:{line}: {reason}")]
    LogParse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
