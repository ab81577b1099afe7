use std::path::PathBuf;

use thiserror::Error;

/// A violated invariant on one of the domain types.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{what} must not be empty")]
    Empty { what: &'static str },
    #[error("{what} out of range: {detail}")]
    OutOfRange { what: &'static str, detail: String },
    #[error("match result inconsistent: {0}")]
    MaskInconsistent(String),
    #[error("anchor provenance inconsistent: {0}")]
    Provenance(String),
}

/// Errors raised while reading or writing the record files.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad header: {0}")]
    Header(String),
    #[error("expected format `{expected}`, found `{found}`")]
    WrongFormat { expected: String, found: String },
    #[error("version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: String },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("truncated file: record {record} is missing or incomplete")]
    Truncated { record: usize },
    #[error("malformed record {record}: {detail}")]
    Malformed { record: usize, detail: String },
    #[error("invalid content: {0}")]
    Invalid(#[from] ValidationError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Top-level error for the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("k-means needs at least {needed} distinct points, got {got}")]
    TooFewDistinctPoints { needed: usize, got: usize },
    #[error("invalid evolve schedule: {0}")]
    Schedule(String),
    #[error("missing output of layer {0}")]
    MissingLayerOutput(usize),
    #[error("anchor-based matching requires predefined anchors (index {0} is evolved)")]
    EvolvedAnchor(usize),
    #[error("distinct mask selects no component")]
    EmptyMask,
    #[error("input is empty: {0}")]
    EmptyInput(&'static str),
    #[error("non-finite gradient at parameter {0}")]
    NonFiniteGradient(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("scaled score transform needs a positive sum")]
    ZeroScoreSum,
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
