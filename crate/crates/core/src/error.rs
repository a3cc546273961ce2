//! Error type shared by every stage of the pipeline.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),

    #[error("table has no feature columns")]
    NoFeatures,

    #[error("duplicate utterance_id `{0}`")]
    DuplicateUtterance(String),

    #[error("data row {row}: {message}")]
    InvalidRow { row: usize, message: String },

    #[error("data row {row}, column `{column}`: {reason}")]
    InvalidValue {
        row: usize,
        column: String,
        reason: String,
    },

    #[error("label `{0}` does not occur in the table")]
    MissingLabel(String),

    #[error("column `{0}` is not in the table")]
    UnknownColumn(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    Empty,

    #[error("non-finite value in input")]
    NonFinite,

    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },

    #[error("labels contain a single class")]
    SingleClass,

    #[error("regularization parameter must be {0}")]
    InvalidRegularization(&'static str),

    #[error("logistic solver did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NotConverged { iterations: usize, grad_norm: f64 },

    #[error("singular normal equations (alpha = 0 with rank-deficient design)")]
    Singular,

    #[error("{speakers} distinct speakers cannot fill {folds} folds")]
    TooFewSpeakers { speakers: usize, folds: usize },

    #[error("hyperparameter grid is empty")]
    EmptyGrid,

    #[error("training split has a single class (outer fold {outer}, inner fold {inner:?})")]
    SplitSingleClass { outer: usize, inner: Option<usize> },

    #[error("tables do not join on utterance_id: {}", describe_join(.missing_in_embedding, .missing_in_acoustic))]
    Join {
        missing_in_embedding: Vec<String>,
        missing_in_acoustic: Vec<String>,
    },

    #[error("feature `{0}` has no category mapping")]
    UnmappedFeature(String),

    #[error("line {line}: unknown category `{category}`")]
    UnknownCategory { line: usize, category: String },

    #[error("total importance is zero; category profile undefined")]
    ZeroImportance,

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("json serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

fn describe_join(emb: &[String], ac: &[String]) -> String {
    let mut parts = Vec::new();
    if !emb.is_empty() {
        parts.push(format!("missing from embedding table: {}", emb.join(", ")));
    }
    if !ac.is_empty() {
        parts.push(format!("missing from acoustic table: {}", ac.join(", ")));
    }
    parts.join("; ")
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Solver-side failures, as opposed to bad input or configuration.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::NotConverged { .. } | Error::Singular)
    }
}
