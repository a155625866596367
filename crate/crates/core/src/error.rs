use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: row {row}, column {col}: expected 0 or 1, found {found:?}")]
    BadCell {
        path: PathBuf,
        row: usize,
        col: usize,
        found: String,
    },
    #[error("{path}: row {row} has {found} columns, expected {expected}")]
    RaggedRow {
        path: PathBuf,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("{0}: no data rows")]
    EmptyFile(PathBuf),
    #[error("{path}: line {line}: {msg}")]
    BadLabel {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is rank deficient (singular values {smallest:e} / {largest:e})")]
    RankDeficient { smallest: f64, largest: f64 },
    #[error("quadratic coefficient w[{col}][{col}] = {value} is not positive")]
    DegenerateColumn { col: usize, value: f64 },
    #[error("non-finite objective value: {0}")]
    NonFinite(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cell n={n}, d={d}, m={m}, replication {replication}: {source}")]
    Cell {
        n: usize,
        d: usize,
        m: f64,
        replication: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input rather than a numerical or I/O
    /// failure. The CLI maps these to exit code 2.
    pub fn is_usage(&self) -> bool {
        if let Error::Cell { source, .. } = self {
            return source.is_usage();
        }
        matches!(
            self,
            Error::BadCell { .. }
                | Error::RaggedRow { .. }
                | Error::EmptyFile(_)
                | Error::BadLabel { .. }
                | Error::Invalid(_)
                | Error::Dimension(_)
                | Error::Json(_)
        )
    }
}
