use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("channel {channel} is identically zero")]
    DegenerateChannel { channel: usize },

    #[error("record of length {n} is too short for difference order {order}")]
    TooShort { n: usize, order: usize },

    #[error("bad parameters: {0}")]
    BadParams(String),

    #[error("retention fraction {s} on {n} samples keeps fewer than {needed} points")]
    TooFewPoints { s: f64, n: usize, needed: usize },

    #[error("{retained} retained points cannot support a degree-{degree} fit")]
    InsufficientSupport { retained: usize, degree: usize },

    #[error("record is exactly recoverable by the method family (F-trivial)")]
    FTrivialRecord,

    #[error("log-log fit needs at least 2 usable points, got {usable}")]
    DegenerateFit { usable: usize },

    #[error("difference order {order}: {source}")]
    AtOrder {
        order: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("subject {id}: {source}")]
    Subject {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate cohort: {0}")]
    DegenerateCohort(String),

    #[error("subject at index {index} is in every bootstrap sample; no OOB votes")]
    NoOobVotes { index: usize },

    #[error("feature schema mismatch: expected {expected:?}, found {found:?}")]
    SchemaMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },

    #[error("training set is empty")]
    EmptyTrain,

    #[error("invalid fold count {k} for cohort of size {n}")]
    BadK { k: usize, n: usize },

    #[error("invalid input: {0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn at_order(self, order: usize) -> Self {
        Error::AtOrder {
            order,
            source: Box::new(self),
        }
    }

    pub(crate) fn for_subject(self, id: impl Into<String>) -> Self {
        Error::Subject {
            id: id.into(),
            source: Box::new(self),
        }
    }

    /// Strips `Subject`/`AtOrder` annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtOrder { source, .. } | Error::Subject { source, .. } => source.root(),
            other => other,
        }
    }
}
