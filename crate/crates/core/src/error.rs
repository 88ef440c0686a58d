use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(String),

    #[error("target column `{0}` not found in header")]
    MissingColumn(String),

    #[error("non-numeric value {value:?} at row {row}, column `{column}`")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("dataset needs at least 2 rows, found {0}")]
    TooFewRows(usize),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),

    #[error("SGD diverged at epoch {epoch}, sample {sample}")]
    Diverged { epoch: usize, sample: usize },

    #[error("innovation covariance is singular at step {step} (condition number {condition:e})")]
    SingularInnovation { step: usize, condition: f64 },

    #[error("degenerate segment: both points have weight {0}")]
    DegenerateSegment(f64),

    #[error("curve needs at least 2 distinct weight values, found {0}")]
    DegenerateCurve(usize),

    #[error("no optimal curve was found")]
    NoOptimalCurve,

    #[error("design matrix is rank deficient (condition number {condition:e}); consider ridge regression")]
    RankDeficient { condition: f64 },

    #[error("features must be standardized: {0}")]
    NotStandardized(String),

    #[error("R-squared is undefined for a constant target")]
    UndefinedRSquared,

    #[error("empty input")]
    EmptyInput,

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("stage `{stage}`{}: {source}", candidate.as_ref().map(|c| format!(" (candidate {c})")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        candidate: Option<String>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str, candidate: Option<&str>) -> Self {
        Error::Stage {
            stage,
            candidate: candidate.map(str::to_owned),
            source: Box::new(self),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
