//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid task instance: {0}")]
    InvalidInstance(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("training failed: {0}")]
    Training(String),

    #[error("scripted expert failed to complete a task: {0}")]
    ExpertFailed(String),

    #[error("collection attempt budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("planner found no finite candidate (model divergence)")]
    PlannerDiverged,

    #[error("reports are not comparable: {0}")]
    ReportMismatch(String),

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    TomlDe(#[from] toml::de::Error),

    #[error("toml: {0}")]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
