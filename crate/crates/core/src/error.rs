use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("need {required} human-labelled records ({detail}), found {available}")]
    InsufficientHuman {
        required: usize,
        available: usize,
        detail: String,
    },
    #[error("shape mismatch in {layer}: expected {expected}, got {got}")]
    Shape {
        layer: String,
        expected: String,
        got: String,
    },
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("non-finite {term} loss at step {step}")]
    NonFinite { term: &'static str, step: usize },
    #[error("checkpoint schema mismatch: expected {expected}, found {found}")]
    Schema { expected: String, found: String },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("embedding failed: {0}")]
    Embedding(String),
    #[error("http: {0}")]
    Http(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
