use std::path::PathBuf;

use thiserror::Error;

use crate::llm_gateway::BackendError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("insufficient triples for relation {relation}: need {needed}, have {available} (short by {})", needed - available)]
    InsufficientTriples {
        relation: String,
        needed: usize,
        available: usize,
    },

    #[error("no template registered for ({relation}, {form}); registered relations: {registered}")]
    UnregisteredTemplate {
        relation: String,
        form: String,
        registered: String,
    },

    #[error("invalid template: {0}")]
    InvalidTemplate(String),

    #[error("invalid section layout: {0}")]
    Sections(String),

    #[error("invalid prompt assets: {0}")]
    Assets(String),

    #[error("backend error: {0}")]
    Backend(#[from] BackendError),

    #[error("invalid request: {0}")]
    Request(String),

    #[error("closed-world oracle {id} violates A ⊆ V ⊆ U: {reason}")]
    OracleInvariant { id: String, reason: String },

    #[error("krippendorff's alpha is undefined: no unit has two or more pairable values")]
    UndefinedAlpha,

    #[error("conflicting labels from annotator {annotator} on answer {answer_id}")]
    ConflictingLabels { answer_id: String, annotator: String },

    #[error("{} answer(s) have no verdicts, first: {}", .0.len(), .0.first().map(String::as_str).unwrap_or(""))]
    MissingVerdicts(Vec<String>),

    #[error("run directory {path} cannot be resumed: {reason}")]
    CorruptRun { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
