use std::time::Duration;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("sentiment profile has zero total mass")]
    ZeroMassProfile,

    #[error("sentiment profile component is negative or not finite")]
    InvalidProfile,

    #[error("update with zero combined weight (W + S = 0)")]
    DegenerateUpdate,

    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("embedding contains a non-finite component")]
    NonFiniteEmbedding,

    #[error("no memory unit with key {0}")]
    NotFound(String),

    #[error("units do not share a canonical key: {0} vs {1}")]
    KeyMismatch(String, String),

    #[error("integrate needs at least two units, got {0}")]
    TooFewUnits(usize),

    #[error("store schema version {found} is not supported (expected {expected})")]
    SchemaMismatch { found: u32, expected: u32 },

    #[error("corrupt record at line {line}: {reason}")]
    CorruptRecord { line: usize, reason: String },

    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("embedder failure: {0}")]
    EmbedderFailure(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("provider rejected credentials")]
    AuthFailure,

    #[error("provider rate limited the request (retry after {retry_after:?})")]
    RateLimited { retry_after: Option<Duration> },

    #[error("provider output did not match the expected shape: {0}")]
    ShapeInvalid(String),

    #[error("provider error: {0}")]
    Provider(String),

    #[error("unknown polarity {0:?}")]
    UnknownPolarity(String),

    #[error("template {template} has unbound placeholder {{{name}}}")]
    UnboundPlaceholder { template: String, name: String },

    #[error("unknown template {0:?}")]
    UnknownTemplate(String),

    #[error("invalid evidence: {0}")]
    InvalidEvidence(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),
}

impl Error {
    /// True for failures originating at a chat or embedding backend.
    pub fn is_provider(&self) -> bool {
        matches!(
            self,
            Error::EmbedderFailure(_)
                | Error::Transport(_)
                | Error::AuthFailure
                | Error::RateLimited { .. }
                | Error::ShapeInvalid(_)
                | Error::Provider(_)
        )
    }

    pub fn is_store_corruption(&self) -> bool {
        matches!(self, Error::SchemaMismatch { .. } | Error::CorruptRecord { .. })
    }
}
