use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape mismatch: expected {expected} features, got {got}")]
    InputShape { expected: usize, got: usize },

    #[error("invalid network config: {0}")]
    NetworkConfig(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    DivergedTraining { epoch: usize },

    #[error("model file parse error at byte {offset}: {message}")]
    ModelParse { offset: usize, message: String },

    #[error("model file version {found} is not supported (expected {expected})")]
    ModelVersion { found: u32, expected: u32 },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("line {line}: column `{column}` has non-numeric value `{value}`")]
    RowParse {
        line: u64,
        column: String,
        value: String,
    },

    #[error("dataset too small: {n} rows (need at least {min})")]
    TooSmall { n: usize, min: usize },

    #[error("{metric} is undefined: {reason}")]
    UndefinedGroup { metric: &'static str, reason: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("reweighing cell (S={s}, Y={y}) is empty")]
    DegenerateCell { s: u8, y: u8 },

    #[error("every tuning trial failed: {}", .0.join("; "))]
    Tuning(Vec<String>),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
