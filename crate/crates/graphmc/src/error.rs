//! Error types shared across the crate.

use thiserror::Error;

/// Position of a token in a model file, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl std::fmt::Display for Pos {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: Pos, msg: String },

    #[error("duplicate name `{0}`")]
    DuplicateName(String),

    #[error("unknown parent `{parent}` of node `{node}`")]
    UnknownParent { node: String, parent: String },

    #[error("cycle detected through nodes: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),

    #[error("unknown density `{0}`")]
    UnknownDensity(String),

    #[error("density `{name}` expects {expected} parameters, got {got}")]
    BadArity {
        name: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter for `{name}`: {msg}")]
    InvalidParameter { name: String, msg: String },

    #[error("unbound identifier `{0}`")]
    UnboundIdentifier(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("replication references unknown node `{0}`")]
    ReplicateUnknownNode(String),

    #[error("data length mismatch for `{node}`: declared {declared}, data has {actual}")]
    DataLengthMismatch {
        node: String,
        declared: usize,
        actual: usize,
    },

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("csv parse error at line {line}: {msg}")]
    CsvParse { line: usize, msg: String },

    #[error("ragged csv rows: line {line} has {got} fields, expected {expected}")]
    RaggedRows {
        line: usize,
        expected: usize,
        got: usize,
    },

    #[error("bad magic bytes in trace file")]
    BadMagic,

    #[error("unsupported trace format version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated row in trace file")]
    TruncatedRow,

    #[error("file not found: {0}")]
    FileNotFound(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
