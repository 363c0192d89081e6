//! Error types shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("duplicate id `{id}` (records {first} and {second})")]
    DuplicateId {
        id: String,
        first: usize,
        second: usize,
    },

    #[error("record `{id}`: api_call does not parse into exactly one call expression")]
    UnparseableApiCall { id: String },

    #[error("record `{id}`: {details}")]
    InvalidRecord { id: String, details: String },

    #[error("unknown api id `{id}`")]
    UnknownId { id: String },

    #[error("example id list is empty")]
    EmptyIdList,

    #[error("database is empty")]
    EmptyDatabase,

    #[error("{count} positional arguments but only {names} argument names")]
    TooManyPositional { count: usize, names: usize },

    #[error("positional argument would collide with keyword `{name}`")]
    KeywordCollision { name: String },

    #[error("no structured output tags found")]
    NoStructuredTags,

    #[error("user prompt is empty")]
    EmptyPrompt,

    #[error("expected exactly 3 in-context pairs, got {got}")]
    IncontextCount { got: usize },

    #[error("expected an in-context pool of exactly 6 pairs, got {got}")]
    PoolSize { got: usize },

    #[error("no candidate for example `{example_id}`")]
    MissingCandidate { example_id: String },

    #[error("no constraint for example `{example_id}`")]
    MissingConstraint { example_id: String },

    #[error("reports cover different example sets")]
    MismatchedExampleSets,

    #[error("replay has no entry for example `{example_id}`")]
    ReplayMiss { example_id: String },

    #[error("backend error{}: {message}", status.map(|s| format!(" (status {s})")).unwrap_or_default())]
    Backend {
        message: String,
        status: Option<u16>,
        retriable: bool,
    },

    #[error("embedding failed for document `{doc_id}`: {message}")]
    EmbeddingFailure { doc_id: String, message: String },

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    /// Whether retrying the operation could plausibly succeed.
    pub fn is_retriable(&self) -> bool {
        matches!(self, Error::Backend { retriable: true, .. })
    }
}
