use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid task spec: {0}")]
    InvalidSpec(String),

    #[error("episode already finished")]
    EpisodeDone,

    #[error("unknown agent `{0}`")]
    UnknownAgent(String),

    #[error("agent `{0}` already exists")]
    DuplicateAgent(String),

    #[error("invalid subtask: {0}")]
    InvalidSubtask(String),

    #[error("parallel group must contain at least one assignment")]
    EmptyGroup,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("batch contains no tokens")]
    EmptyBatch,

    #[error("ground truth is empty")]
    EmptyTruth,

    #[error("no budget recorded for task `{0}`")]
    MissingBudget(String),

    #[error("budget table is frozen")]
    BudgetFrozen,

    #[error("budget table must be frozen before use")]
    BudgetNotFrozen,

    #[error("params snapshot `{0}` not available")]
    MissingSnapshot(String),

    #[error("trace record lacks data required for replay: {0}")]
    MissingData(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid_param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
