//! Chat-completion and embedding backends.
//!
//! Every call site works against the [`ChatProvider`] / [`EmbeddingProvider`]
//! traits, so the deterministic mocks and the HTTP client are interchangeable.

use std::sync::Arc;

use serde_json::Value;

use crate::config::{Config, ProviderKind};
use crate::error::{Error, Result};
use crate::prompt::Prompt;

pub mod live;
pub mod mock;
pub mod shape;

pub use live::{LiveChat, LiveEmbedder};
pub use mock::{mock_embed, mock_extract, MockChat, MockEmbedder, Observation};
pub use shape::{extract_json, JsonShape};

pub trait ChatProvider: Send + Sync {
    /// One completion for a rendered prompt.
    fn complete(&self, prompt: &Prompt) -> Result<String>;

    /// Extra attempts allowed when structured output fails its shape check.
    fn structured_retries(&self) -> u32 {
        0
    }

    fn is_live(&self) -> bool {
        false
    }

    /// A completion parsed as JSON and checked against `shape`. Retries up to
    /// [`structured_retries`](Self::structured_retries) times on malformed
    /// output, then fails with [`Error::ShapeInvalid`].
    fn structured(&self, prompt: &Prompt, shape: &JsonShape) -> Result<Value> {
        let mut last = String::new();
        for _ in 0..=self.structured_retries() {
            let text = self.complete(prompt)?;
            match extract_json(&text) {
                Some(doc) => match shape.check(&doc) {
                    Ok(()) => return Ok(doc),
                    Err(why) => last = why,
                },
                None => last = "reply is not JSON".to_string(),
            }
        }
        Err(Error::ShapeInvalid(format!("{}: {last}", prompt.template)))
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
    fn dimension(&self) -> usize;
}

pub type SharedChat = Arc<dyn ChatProvider>;
pub type SharedEmbedder = Arc<dyn EmbeddingProvider>;

/// Build the provider pair selected by `config`. Live providers need
/// `DAM_API_KEY`; its absence is reported here rather than on first use.
pub fn from_config(config: &Config) -> Result<(SharedChat, SharedEmbedder)> {
    match config.provider {
        ProviderKind::Mock => Ok((Arc::new(MockChat::new()), Arc::new(MockEmbedder::new(config.embed_dim)))),
        ProviderKind::Live => {
            let key = config
                .api_key
                .clone()
                .filter(|k| !k.is_empty())
                .ok_or_else(|| Error::InvalidConfig("live provider needs DAM_API_KEY".into()))?;
            Ok((Arc::new(LiveChat::new(config, &key)), Arc::new(LiveEmbedder::new(config, &key))))
        }
    }
}
