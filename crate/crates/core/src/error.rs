use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box [{x1}, {y1}, {x2}, {y2}]: {reason}")]
    InvalidBox {
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
        reason: &'static str,
    },

    #[error("{path}: parse error at byte {offset} (line {line}, column {column}): {message}")]
    Parse {
        path: String,
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{kind} {id} referenced but not defined")]
    DanglingReference { kind: &'static str, id: u64 },

    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: u64 },

    #[error("class split covers categories incorrectly: uncovered {uncovered:?}, covered twice {duplicated:?}, unknown {unknown:?}")]
    SplitCoverage {
        uncovered: Vec<u64>,
        duplicated: Vec<u64>,
        unknown: Vec<String>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("value {value} outside domain: {what}")]
    Domain { what: &'static str, value: f64 },

    #[error("loss is not differentiable at this point: {0}")]
    NonDifferentiable(String),

    #[error("cost matrix entry ({row}, {col}) is not finite: {value}")]
    NonFiniteCost { row: usize, col: usize, value: f64 },

    #[error("cost matrix row {row} has {len} entries, expected {expected}")]
    RaggedCostMatrix {
        row: usize,
        len: usize,
        expected: usize,
    },

    #[error("prediction {prediction} has no probability for class {class}")]
    MissingClassProbability { prediction: usize, class: u64 },

    #[error("{0}")]
    Invalid(String),

    #[error("could not place {objects} objects with max IoU {max_iou} after {attempts} attempts; use fewer or smaller objects")]
    Unsatisfiable {
        objects: usize,
        max_iou: f64,
        attempts: usize,
    },

    #[error("unknown metric key {0:?}")]
    UnknownMetric(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Build a parse error from a serde_json error, converting its
    /// line/column position into a byte offset into `text`.
    pub(crate) fn parse(path: &str, text: &str, err: &serde_json::Error) -> Self {
        let line = err.line();
        let column = err.column();
        Error::Parse {
            path: path.to_string(),
            offset: byte_offset(text, line, column),
            line,
            column,
            message: err.to_string(),
        }
    }
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(text.len());
        }
        offset += l.len();
    }
    text.len()
}
