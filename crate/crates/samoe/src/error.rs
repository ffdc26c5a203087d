use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    #[error("shape/data mismatch: shape {shape:?} implies {expected} elements, got {actual}")]
    ShapeData {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },

    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("softmax over empty axis")]
    SoftmaxEmptyAxis,

    #[error("{op}: index {index} out of bounds (limit {bound})")]
    IndexOutOfBounds {
        op: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NotScalarLoss { shape: Vec<usize> },

    #[error("backward called twice on a consumed graph")]
    GraphConsumed,

    #[error("non-finite gradient for parameter '{name}'")]
    NonFiniteGradient { name: String },

    #[error("duplicate parameter name '{0}'")]
    DuplicateParam(String),

    #[error("unknown parameter '{0}'")]
    UnknownParam(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("dataset error for example '{example_id}': {message}")]
    Dataset { example_id: String, message: String },

    #[error("table '{0}' not found")]
    TableNotFound(String),

    #[error("unparseable numeric cell '{cell}' in table '{table_id}'")]
    BadNumericCell { table_id: String, cell: String },

    #[error("could not satisfy template '{template}' after {retries} retries")]
    GenerationRetriesExceeded { template: String, retries: usize },

    #[error("statement ({len} tokens) exceeds input budget ({budget} tokens)")]
    StatementTooLong { len: usize, budget: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    TrainingDiverged { step: u64, loss: f64 },

    #[error("missing prerequisite artifact: {0}")]
    MissingArtifact(String),

    #[error("cache error: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
