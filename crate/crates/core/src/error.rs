use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("invalid factor `{factor}`: {message}")]
    InvalidFactor { factor: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("design would need {rows} runs, above the run budget of {cap}")]
    Budget { rows: u128, cap: u64 },

    #[error("unsupported: {0}")]
    Capability(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("non-finite or failed model output for run {run_id} poisons factor {factor} in trajectory {trajectory}")]
    PoisonedEffect {
        run_id: usize,
        factor: String,
        trajectory: usize,
    },

    #[error("factor `{factor}` has {r} usable replicates; at least 2 are required")]
    InsufficientReplication { factor: String, r: usize },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("integration failed at t = {t}: {message}")]
    Integration { t: f64, message: String },

    #[error("model error: {0}")]
    Model(String),

    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error("store {path}: {message}")]
    Store { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::InvalidFactor { .. }
            | Error::Config(_)
            | Error::Domain(_)
            | Error::Capability(_)
            | Error::InsufficientReplication { .. }
            | Error::UndefinedMetric(_) => 2,
            Error::Budget { .. } => 3,
            Error::Alignment(_) | Error::Schema(_) | Error::Store { .. } => 4,
            Error::PoisonedEffect { .. } | Error::Integration { .. } | Error::Model(_) => 5,
            Error::EmptySelection(_) => 6,
            Error::Io(_) | Error::Json(_) | Error::Csv(_) => 1,
        }
    }
}
