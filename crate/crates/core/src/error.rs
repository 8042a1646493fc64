use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown construction `{name}`; valid names: {valid}")]
    UnknownConstruction { name: String, valid: String },

    #[error("minimal pair must differ at exactly one index, found {differing} ({grammatical:?} / {ungrammatical:?})")]
    PairInvariant {
        differing: usize,
        grammatical: Vec<String>,
        ungrammatical: Vec<String>,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("overlapping edits: {0}")]
    OverlappingEdits(String),

    /// A remapped span fell outside the corrected sentence.
    #[error("internal consistency: {0}")]
    Consistency(String),

    #[error("requested {requested} sentences but only {available} are available")]
    InsufficientData { requested: usize, available: usize },

    #[error("embedding store format: {0}")]
    Format(String),

    #[error("embedding store integrity at byte {offset}: {message}")]
    Integrity { offset: u64, message: String },

    #[error("unknown sentence id `{0}`")]
    UnknownSentence(String),

    #[error("embedding store {} not found; create it with `{command}`", path.display())]
    MissingStore { path: PathBuf, command: String },

    #[error("layer {layer} out of range {min}..={max}")]
    LayerOutOfRange { layer: u16, min: u16, max: u16 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("sentence `{0}` has no verb positions")]
    MissingVerbPositions(String),

    #[error("predictions missing for {} sentence(s): {}", .0.len(), .0.join(", "))]
    CoverageGap(Vec<String>),

    #[error("reports do not share structure: {0}")]
    Heterogeneous(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that indicate corrupted or inconsistent stored data
    /// rather than bad user input.
    pub fn is_integrity(&self) -> bool {
        matches!(
            self,
            Error::Format(_) | Error::Integrity { .. } | Error::Consistency(_)
        )
    }
}
