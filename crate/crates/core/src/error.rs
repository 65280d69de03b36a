use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library.
///
/// Data-quality findings (record violations, malformed corpus lines, parse
/// failures) are returned as values, not errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported schema version {found} (reader supports major {supported})")]
    SchemaVersion { found: String, supported: u32 },

    #[error("corpus {path} holds `{found}` records, expected `{expected}`")]
    RecordKind {
        path: PathBuf,
        found: String,
        expected: String,
    },

    #[error("{what}:{line}: {message}")]
    Format {
        what: String,
        line: usize,
        message: String,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid lexicon: {0}")]
    Lexicon(String),

    #[error("no templates for task `{0}`")]
    NoTemplates(String),

    #[error("pipeline stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("length mismatch: {left} ground-truth items vs {right} predictions")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty reference text")]
    EmptyReference,

    #[error("value {value} for `{field}` is out of range")]
    OutOfRange { field: String, value: f64 },

    #[error("empty corpus for dataset `{0}`")]
    EmptyCorpus(String),

    #[error("missing predictions for dataset `{dataset}`: {ids:?}")]
    MissingPredictions { dataset: String, ids: Vec<String> },

    #[error("invalid suite: {0}")]
    Suite(String),

    #[error("dimension error: {0}")]
    Shape(String),

    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
