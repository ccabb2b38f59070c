use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error at row {row}: {message}")]
    Csv { row: usize, message: String },

    #[error("non-numeric value {value:?} at row {row}, column {column:?}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("label column {0:?} not found")]
    MissingLabelColumn(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("sample size {requested} out of range 1..={available}")]
    SampleSizeOutOfRange { requested: usize, available: usize },

    #[error("not enough rows ({rows}) for {plan}")]
    TooFewRows { rows: usize, plan: String },

    #[error("invalid resampling plan: {0}")]
    InvalidPlan(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("unknown learner {0:?}")]
    UnknownLearner(String),

    #[error("learner {learner} does not support task {task}")]
    UnsupportedTask { learner: String, task: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("feature count mismatch: model expects {expected}, got {actual}")]
    ColumnMismatch { expected: usize, actual: usize },

    #[error("local search: {0}")]
    LocalSearch(String),

    #[error("eci: {0}")]
    Eci(String),

    #[error("no learner available: {0}")]
    NoLearner(String),

    #[error("malformed log line {line}: {message}")]
    LogParse { line: usize, message: String },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
