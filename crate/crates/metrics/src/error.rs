use thiserror::Error;

pub type Result<T> = std::result::Result<T, MetricsError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("reference scores are equal ({0})")]
    EqualReferences(f64),
    #[error("{0}: no scores")]
    Empty(&'static str),
    #[error("game `{0}` has no runs")]
    NoRuns(String),
    #[error("non-finite score in game `{0}`")]
    NonFinite(String),
    #[error("trim fraction {0} outside [0, 0.5)")]
    BadTrim(f64),
    #[error("bootstrap: {0}")]
    Bootstrap(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("no reference scores for `{0}`")]
    MissingReference(String),
}
