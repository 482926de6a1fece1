use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: schema error in column `{column}`: {reason}")]
    Schema {
        path: String,
        column: String,
        reason: String,
    },

    #[error("{path}: row {row} (id `{id}`): invalid value `{value}` in column `{column}`, expected 0 or 1")]
    LabelValue {
        path: String,
        row: usize,
        id: String,
        column: String,
        value: String,
    },

    #[error("{path}: duplicate id `{id}` at rows {first_row} and {second_row}")]
    DuplicateId {
        path: String,
        id: String,
        first_row: usize,
        second_row: usize,
    },

    #[error("{path}: malformed CSV: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },

    #[error("label vector has no active emotion")]
    NeutralInput,

    #[error("neutral rows present under neutral_policy=error: {}", ids.join(", "))]
    NeutralRows { ids: Vec<String> },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{context}: parse error on line {line}: {reason}")]
    Parse {
        context: String,
        line: usize,
        reason: String,
    },

    #[error("decode error: {0}")]
    Decode(String),

    #[error("non-finite loss at step {step} (batch rows {rows:?})")]
    NonFiniteLoss { step: usize, rows: Vec<usize> },

    #[error("checkpoint load failed for {path}: {reason}{}", format_diff(diff))]
    CheckpointLoad {
        path: PathBuf,
        reason: String,
        diff: Vec<(String, String, String)>,
    },

    #[error("backend error: {0}")]
    Backend(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn format_diff(diff: &[(String, String, String)]) -> String {
    if diff.is_empty() {
        return String::new();
    }
    let mut s = String::from(" [manifest diff:");
    for (key, expected, actual) in diff {
        s.push_str(&format!(" {key}: expected `{expected}`, found `{actual}`;"));
    }
    s.push(']');
    s
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
