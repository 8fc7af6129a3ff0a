//! Affective memory for dialogue agents.
//!
//! Beliefs about `(object, aspect)` pairs are kept as confidence profiles
//! with an accumulated evidence weight. New evidence is folded in by a
//! strength-weighted average, belief entropy measures how confused a unit
//! is, and a compression pass merges duplicates and deletes units that stay
//! confused without support. Retrieval filters on metadata, then re-ranks by
//! cosine similarity of summary embeddings.

pub mod agents;
pub mod belief;
pub mod clock;
pub mod compression;
pub mod config;
pub mod error;
pub mod key;
pub mod prompt;
pub mod providers;
pub mod retrieval;
pub mod service;
pub mod sim;
pub mod store;

pub use belief::{
    bayes_update, belief_entropy, classify_entropy, normalize, EntropyBand, EntropyBands, Evidence, MemoryUnit,
    Polarity, SentimentProfile, Timestamp,
};
pub use config::Config;
pub use error::{Error, Result};
pub use key::{canonicalize, UnitKey};
pub use store::MemoryStore;
