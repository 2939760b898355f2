use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("record {record}: unknown label {label:?} for variable {variable:?}")]
    UnknownLabel {
        record: usize,
        variable: String,
        label: String,
    },

    #[error("record {record}: expected {expected} fields, found {found}")]
    RaggedRecord {
        record: usize,
        expected: usize,
        found: usize,
    },

    #[error("structural-zero rule matches {} nonzero cell(s): {}", .cells.len(), .cells.join("; "))]
    StructuralZeroConflict { cells: Vec<String> },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("undefined result: {0}")]
    Undefined(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("non-convergence after {iterations} iterations: {detail}")]
    NotConverged { iterations: usize, detail: String },

    #[error("design is rank deficient; aliased terms: {}", .terms.join(", "))]
    RankDeficient { terms: Vec<String> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
