use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Validation and ingestion failures for subject-level data.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("dataset is empty")]
    Empty,
    #[error("subject {id}: non-positive time {time}")]
    NonPositiveTime { id: i64, time: i64 },
    #[error("subject {id}: invalid status {status} (expected 0 or 1)")]
    InvalidStatus { id: i64, status: i64 },
    #[error("subject {id}: expected {expected} {what} values, found {found}")]
    RaggedCovariates {
        id: i64,
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("subject {id}: time {time} exceeds k_max {k_max}")]
    TimeBeyondKmax { id: i64, time: i64, k_max: u32 },
    #[error("subject {id}: non-finite value in column '{column}'")]
    NonFinite { id: i64, column: String },
    #[error("subject {id}: value {value} is not a level code of categorical '{column}'")]
    UnknownLevel { id: i64, column: String, value: f64 },
    #[error("collapse point {from} outside (1, {k_max}]")]
    CollapseOutOfRange { from: u32, k_max: u32 },
    #[error("permutation requires at least 2 subjects, found {0}")]
    TooFewSubjects(usize),
    #[error("csv: {0}")]
    Csv(String),
    #[error("column '{0}' not found in header")]
    MissingColumn(String),
    #[error("row {row}: missing value in column '{column}'")]
    MissingValue { row: usize, column: String },
    #[error("row {row}: cannot parse '{value}' in column '{column}'")]
    Parse { row: usize, column: String, value: String },
    #[error("row {row}: unseen level '{level}' for categorical '{column}'")]
    UnseenLevel { row: usize, column: String, level: String },
    #[error("schema mismatch: {0}")]
    Schema(String),
}

/// Numerical failures in the hazard model and covariance estimates.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("no augmented rows to fit")]
    NoRows,
    #[error("design matrix is rank deficient (condition estimate {0:.3e})")]
    RankDeficient(f64),
    #[error("IRLS did not converge after {iterations} iterations (last relative change {last_change:.3e})")]
    NotConverged { iterations: usize, last_change: f64 },
    #[error("complete separation suspected: |linear predictor| reached {0:.2}")]
    Separation(f64),
    #[error("covariance matrix is singular (Cholesky failed)")]
    SingularCovariance,
    #[error("degenerate covariance: smallest eigenvalue {0:.3e} below floor")]
    DegenerateCovariance(f64),
    #[error("non-finite parameter vector")]
    NonFiniteTheta,
}

/// Failures while computing fluctuation statistics or their p-values.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TestError {
    #[error("trimming window [{low}, {high}] is invalid")]
    InvalidTrim { low: f64, high: f64 },
    #[error("trimming window [{low}, {high}] contains no evaluation point (n = {n})")]
    EmptyWindow { low: f64, high: f64, n: usize },
    #[error("categorical statistic needs at least two non-empty categories, found {0}")]
    TooFewCategories(usize),
    #[error("statistic {0} is negative or not finite")]
    InvalidStatistic(f64),
    #[error(
        "no supLM reference for d = {d}, trim = [{low}, {high}]; supported: d in 1..={max_d}, 0 < low < 0.5 < high < 1"
    )]
    UnsupportedReference {
        d: usize,
        low: f64,
        high: f64,
        max_d: usize,
    },
    #[error("permutation null is empty")]
    EmptyNull,
    #[error("{failed} of {total} permutations failed to refit")]
    PermutationFailures { failed: usize, total: usize },
    #[error("reference cache: {0}")]
    Cache(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Test(#[from] TestError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unseen categorical level '{level}' for '{variable}'")]
    UnseenLevel { variable: String, level: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable process exit code: 2 usage/config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Test(TestError::InvalidTrim { .. })
            | Error::Test(TestError::UnsupportedReference { .. }) => 2,
            Error::Data(_) | Error::UnseenLevel { .. } | Error::Io(_) | Error::Json(_) => 3,
            Error::Fit(_) | Error::Test(_) => 4,
        }
    }
}
