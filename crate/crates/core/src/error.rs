//! Error categories shared across the pipeline.

use thiserror::Error;

/// All failure modes the library surfaces to callers.
#[derive(Debug, Error)]
pub enum Error {
    /// A required column is absent from the input schema.
    #[error("schema error: missing required column '{0}'")]
    MissingColumn(String),

    /// A row could not be parsed into a record.
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    /// A goal index lies outside 1..=17.
    #[error("label out of range: '{0}' is not a goal index in 1..=17")]
    LabelRange(String),

    /// A label vector violates the multi-hot contract.
    #[error("invalid label: {0}")]
    Label(String),

    /// The goal-definition set is incomplete or inconsistent.
    #[error("goal definition set: {0}")]
    DefinitionSet(String),

    /// Dataset too small for the requested split.
    #[error("split size error: {0}")]
    SplitSize(String),

    /// Tensor dimensions disagree.
    #[error("shape error: {0}")]
    Shape(String),

    /// A scalar parameter is outside its valid range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Contrastive batches need at least two members.
    #[error("batch error: {0}")]
    Batch(String),

    /// Text produced no tokens.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// Pooling over zero unmasked rows.
    #[error("empty pool: {0}")]
    EmptyPool(String),

    /// Prompt template misuse.
    #[error("template error: {0}")]
    Template(String),

    /// Fixture-mode lookup failed.
    #[error("cache miss: no fixture for provider '{provider}' hash {hash}")]
    CacheMiss { provider: String, hash: String },

    /// Live provider transport failure after retries.
    #[error("provider error: {0}")]
    Provider(String),

    /// Checkpoint container rejected.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Configuration invalid or contradictory.
    #[error("config error: {0}")]
    Config(String),

    /// Non-finite value encountered during optimization.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Regression target has no usable signal.
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
