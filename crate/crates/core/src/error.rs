use thiserror::Error;

use crate::domain::Group;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch{}: expected {expected}, found {found}", row_suffix(*.row))]
    Dimension {
        row: Option<usize>,
        expected: usize,
        found: usize,
    },

    #[error("non-finite {what} at row {row}")]
    NonFinite { row: usize, what: &'static str },

    #[error("row {row}: sensitive label {label:?} is neither plus nor minus")]
    InvalidLabel { row: usize, label: String },

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("only one sensitive group is present; the group posterior is undefined")]
    SingleClass,

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{side} marginal sums to {total}, expected 1")]
    MarginalMismatch { side: &'static str, total: f64 },

    #[error("non-finite or negative cost at ({row}, {col})")]
    InvalidCost { row: usize, col: usize },

    #[error("{0} locations are not sorted in nondecreasing order")]
    Unsorted(&'static str),

    #[error("plan entry ({row}, {col}) is outside a {rows}x{cols} cost matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("partition is degenerate: one side of the signed measure is empty")]
    DegeneratePartition,

    #[error("network simplex failed: {0}")]
    Solver(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("csv row {row}: {message}")]
    Csv { row: usize, message: String },

    #[error("group {group} has {count} rows, need at least {needed}")]
    GroupTooSmall {
        group: Group,
        count: usize,
        needed: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn row_suffix(row: Option<usize>) -> String {
    match row {
        Some(r) => format!(" at row {r}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
