use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("missing variable `{0}`")]
    MissingVariable(String),
    #[error("name collision: `{0}` already exists")]
    NameCollision(String),
    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("score undefined: target has zero variance")]
    UndefinedScore,
    #[error("degenerate labels: both classes must be present")]
    DegenerateLabels,
    #[error("subset budget of {budget} fits exceeded; use forward selection instead")]
    BudgetExceeded { budget: usize },
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
