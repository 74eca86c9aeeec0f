use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report.
///
/// Variants are grouped by the process exit code they map to, see
/// [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("empty file: {0}")]
    EmptyFile(PathBuf),

    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("malformed number {value:?} at (year {year}, {column})")]
    MalformedNumber {
        year: String,
        column: String,
        value: String,
    },

    #[error("negative loss at (year {year}, {column})")]
    NegativeLoss { year: String, column: String },

    #[error("non-finite loss at (year {year}, {column})")]
    NonFiniteLoss { year: String, column: String },

    #[error("missing cell at (year {year}, {column})")]
    MissingCell { year: String, column: String },

    #[error("malformed year identifier {value:?} on line {line}")]
    MalformedYear { line: u64, value: String },

    #[error("duplicate country column {0}")]
    DuplicateCountry(String),

    #[error("duplicate year {0}")]
    DuplicateYear(i64),

    #[error("invalid country code {0:?}: expected three uppercase letters")]
    InvalidCountryCode(String),

    #[error("matrix has no years")]
    NoYears,

    #[error("matrix has no countries")]
    NoCountries,

    #[error("matrix shape mismatch: {0}")]
    Shape(String),

    #[error("event {event_id}: year {year} outside window {start}-{end}")]
    YearOutOfWindow {
        event_id: String,
        year: i64,
        start: i64,
        end: i64,
    },

    #[error("event {event_id}: conflicting rows for {iso3}")]
    ConflictingEventRow { event_id: String, iso3: String },

    #[error("event {event_id}: rows disagree on year ({first} vs {second})")]
    ConflictingEventYear { event_id: String, first: i64, second: i64 },

    #[error("invalid country metadata for {iso3}: {reason}")]
    InvalidMeta { iso3: String, reason: String },

    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),

    #[error("tail count {k} exceeds series length {n}")]
    TailTooLong { k: usize, n: usize },

    #[error("tail year set is empty")]
    EmptyTail,

    #[error("tail year index {index} out of range for series of length {len}")]
    TailIndexOutOfRange { index: usize, len: usize },

    #[error("member set is empty")]
    EmptyMembers,

    #[error("unknown country {0}")]
    UnknownCountry(String),

    #[error("invalid optimizer configuration: {0}")]
    InvalidOptimizerConfig(String),

    #[error("invalid sampler configuration: {0}")]
    InvalidSamplerConfig(String),

    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),

    #[error("year {0} has no season labels")]
    NoSeasonLabels(i64),

    #[error("invalid season label {0:?}")]
    InvalidSeasonLabel(String),

    #[error("year type {0} has positive frequency but no member years")]
    EmptyYearType(String),

    #[error("no feasible allocation: {0}")]
    Infeasible(String),

    #[error("search space of {size} allocations exceeds limit {limit}")]
    SearchSpaceTooLarge { size: u128, limit: u128 },

    #[error("region {0} has no candidate countries")]
    EmptyRegion(String),

    #[error("missing regional results for pool {pool}: {path}")]
    MissingRegionalResults { pool: String, path: PathBuf },

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    /// Process exit code: 1 input/validation, 2 infeasible optimization,
    /// 3 internal invariant failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible(_) | Error::SearchSpaceTooLarge { .. } | Error::EmptyRegion(_) => 2,
            Error::Invariant(_) => 3,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
