use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV: {0}")]
    Csv(String),

    #[error("non-monotone dates at row {row}: {date}")]
    NonMonotoneDates { row: usize, date: String },

    #[error("missing cell at row {row}, column '{column}'")]
    MissingCell { row: usize, column: String },

    #[error("unknown column '{0}' in schema")]
    UnknownColumn(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive definite after jitter: {0}")]
    NotPositiveDefinite(String),

    #[error("non-finite likelihood at sweep {sweep}: {detail}")]
    Divergence { sweep: usize, detail: String },

    #[error("window {window} failed: {source}")]
    Window {
        window: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate series: {0}")]
    Degenerate(String),

    #[error("date mismatch: {0}")]
    DateMismatch(String),

    #[error("unknown model family '{0}'")]
    UnknownFamily(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    MissingArtifact(String),

    #[error("verification failed: {0}")]
    Verification(String),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
