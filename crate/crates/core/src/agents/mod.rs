//! The per-session turn pipeline: route, extract, run the master step,
//! generate a reply.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::Serialize;

use crate::belief::MemoryUnit;
use crate::clock::{Clock, LogicalClock, SystemClock};
use crate::compression::{append_audit, compress_pass, CompressionAction, CompressionPolicy, Summarizer};
use crate::config::{Config, ProviderKind};
use crate::error::{Error, Result};
use crate::prompt::TemplateRegistry;
use crate::providers::{self, ChatProvider, SharedChat, SharedEmbedder};
use crate::retrieval::{cosine, retrieve, Hit, QueryKey};
use crate::store::MemoryStore;

pub mod extraction;
pub mod generate;
pub mod master;
pub mod routing;
pub mod summary;

pub use extraction::{extract, Extracted};
pub use generate::{generate_response, APOLOGY};
pub use master::{master_step, MasterCategorization, MasterDeps, MasterOutcome};
pub use routing::{route, RouteKind, RoutingDecision};

/// Summaries through the chat provider's summarize template.
pub struct ChatSummarizer<'a> {
    pub chat: &'a dyn ChatProvider,
    pub templates: &'a TemplateRegistry,
}

impl Summarizer for ChatSummarizer<'_> {
    fn refresh(&self, unit: &MemoryUnit, description: &str) -> Result<String> {
        summary::refresh_summary(self.chat, self.templates, unit, description)
    }
}

/// Shared, immutable machinery behind a pipeline.
#[derive(Clone)]
pub struct Engine {
    pub config: Arc<Config>,
    pub chat: SharedChat,
    pub embedder: SharedEmbedder,
    pub templates: Arc<TemplateRegistry>,
    pub clock: Arc<dyn Clock>,
}

impl Engine {
    /// Providers from the config. Mock runs use a logical clock so repeated
    /// runs produce identical stores.
    pub fn from_config(config: Config) -> Result<Engine> {
        config.validate()?;
        let (chat, embedder) = providers::from_config(&config)?;
        let templates = match &config.prompts_dir {
            Some(dir) => TemplateRegistry::from_dir(dir)?,
            None => TemplateRegistry::builtin(),
        };
        let clock: Arc<dyn Clock> = match config.provider {
            ProviderKind::Mock => Arc::new(LogicalClock::default()),
            ProviderKind::Live => Arc::new(SystemClock),
        };
        Ok(Engine { config: Arc::new(config), chat, embedder, templates: Arc::new(templates), clock })
    }

    pub fn with_providers(config: Config, chat: SharedChat, embedder: SharedEmbedder, clock: Arc<dyn Clock>) -> Engine {
        Engine { config: Arc::new(config), chat, embedder, templates: Arc::new(TemplateRegistry::builtin()), clock }
    }

    pub fn policy(&self) -> CompressionPolicy {
        CompressionPolicy::from(&*self.config)
    }

    pub fn new_store(&self) -> MemoryStore {
        MemoryStore::new(self.embedder.dimension(), self.config.fingerprint())
    }

    pub fn summarizer(&self) -> ChatSummarizer<'_> {
        ChatSummarizer { chat: &*self.chat, templates: &self.templates }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnOutcome {
    pub input: String,
    pub response: String,
    pub routing: RoutingDecision,
    pub actions: Vec<CompressionAction>,
    pub retrieved: Vec<Hit>,
    /// Summary of the best retrieved memory, if any.
    pub top_summary: Option<String>,
    /// `Rel - lambda * |M|` for this turn.
    pub objective: f64,
    pub warnings: Vec<String>,
}

/// One conversation over one store. Turns are strictly sequential.
#[derive(Clone)]
pub struct Pipeline {
    engine: Engine,
    store: MemoryStore,
    history: VecDeque<(String, String)>,
    last_objective: Option<f64>,
}

/// A resumed store must not see timestamps it already holds.
fn catch_up(engine: &Engine, store: &MemoryStore) {
    if let Some(t) = store.units().map(|u| u.updated_at.max(u.created_at)).max() {
        engine.clock.catch_up(t);
    }
}

impl Pipeline {
    pub fn new(engine: Engine, store: MemoryStore) -> Result<Pipeline> {
        if store.dim() != engine.embedder.dimension() {
            return Err(Error::DimensionMismatch { expected: engine.embedder.dimension(), got: store.dim() });
        }
        catch_up(&engine, &store);
        Ok(Pipeline { engine, store, history: VecDeque::new(), last_objective: None })
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn store(&self) -> &MemoryStore {
        &self.store
    }

    /// The same conversation over a different store.
    pub fn with_store(mut self, store: MemoryStore) -> Pipeline {
        catch_up(&self.engine, &store);
        self.store = store;
        self
    }

    pub fn into_store(self) -> MemoryStore {
        self.store
    }

    pub fn last_objective(&self) -> Option<f64> {
        self.last_objective
    }

    /// The recent-turn window, oldest first.
    pub fn messages(&self) -> String {
        self.history.iter().map(|(u, a)| format!("User: {u}\nAssistant: {a}")).collect::<Vec<_>>().join("\n")
    }

    pub fn turn(&mut self, input: &str) -> Result<TurnOutcome> {
        let e = self.engine.clone();
        let messages = self.messages();
        let mut warnings = Vec::new();
        let routing = route(&*e.chat, &e.templates, input, &messages);
        warnings.extend(routing.warning.clone());

        let mut actions = Vec::new();
        let mut hits = Vec::new();
        match routing.kind {
            RouteKind::Store => match extract(&*e.chat, &e.templates, input, &messages) {
                Ok(x) => {
                    if x.clamped {
                        warnings.push("extracted confidences clamped to [0, 1]".into());
                    }
                    let policy = e.policy();
                    let summarizer = e.summarizer();
                    let deps = MasterDeps {
                        chat: &*e.chat,
                        embedder: &*e.embedder,
                        templates: &e.templates,
                        summarizer: &summarizer,
                        policy: &policy,
                        top_k: e.config.top_k,
                    };
                    let out = master_step(&mut self.store, &deps, &x.evidence, e.clock.now())?;
                    actions = out.actions;
                    if actions.iter().any(|a| a.summary_stale) {
                        warnings.push("summary refresh failed; numeric update kept".into());
                    }
                    let q = QueryKey::new(Some(&x.evidence.object_type), Some(&x.evidence.aspect), &x.evidence.query)?;
                    hits = retrieve(&self.store, &*e.embedder, &q, e.config.top_k)?.hits;
                }
                Err(
                    err @ (Error::ShapeInvalid(_)
                    | Error::InvalidEvidence(_)
                    | Error::ZeroMassProfile
                    | Error::InvalidProfile),
                ) => {
                    warnings.push(format!("evidence dropped: {err}"));
                }
                Err(err) => return Err(err),
            },
            RouteKind::Retrieve => {
                let (object, object_type) = routing.hint.clone().unwrap_or_default();
                let q = QueryKey::new(Some(&object_type), None, &format!("{object} {input}"))?;
                let mut r = retrieve(&self.store, &*e.embedder, &q, e.config.top_k)?;
                if r.candidate_count == 0 {
                    // the hinted type matched nothing; fall back to a semantic search
                    let q = QueryKey::new(None, None, &format!("{object} {input}"))?;
                    r = retrieve(&self.store, &*e.embedder, &q, e.config.top_k)?;
                }
                hits = r.hits;
            }
            RouteKind::Generate => {}
        }

        let user_info = generate::format_user_info(&self.store, &hits);
        let (response, warn) = generate_response(&*e.chat, &e.templates, input, &messages, &user_info);
        warnings.extend(warn);

        let top_summary = hits.first().and_then(|h| self.store.get(&h.key)).map(|u| u.summary.clone());
        let objective =
            turn_objective(&*e.embedder, &response, top_summary.as_deref(), self.store.len(), e.config.lambda)?;
        self.last_objective = Some(objective);

        self.history.push_back((input.to_string(), response.clone()));
        while self.history.len() > e.config.history_turns {
            self.history.pop_front();
        }
        if let Some(path) = &e.config.audit_log {
            append_audit(path, e.clock.now(), &actions)?;
        }
        Ok(TurnOutcome {
            input: input.to_string(),
            response,
            routing,
            actions,
            retrieved: hits,
            top_summary,
            objective,
            warnings,
        })
    }

    /// A compression pass over every unit in the store.
    pub fn compact(&mut self) -> Result<Vec<CompressionAction>> {
        compact_store(&self.engine, &mut self.store)
    }
}

pub fn compact_store(e: &Engine, store: &mut MemoryStore) -> Result<Vec<CompressionAction>> {
    let keys: Vec<_> = store.keys().cloned().collect();
    let actions = compress_pass(store, &keys, &e.policy(), &*e.embedder, &e.summarizer())?;
    if let Some(path) = &e.config.audit_log {
        append_audit(path, e.clock.now(), &actions)?;
    }
    Ok(actions)
}

/// `Rel - lambda * |M|`, with `Rel` the cosine between the embedded response
/// and the embedded top memory summary, or 0 without one.
pub fn turn_objective(
    embedder: &dyn providers::EmbeddingProvider,
    response: &str,
    top_summary: Option<&str>,
    unit_count: usize,
    lambda: f64,
) -> Result<f64> {
    let rel = match top_summary {
        Some(s) => cosine(&embedder.embed(response)?, &embedder.embed(s)?)?,
        None => 0.0,
    };
    Ok(rel - lambda * unit_count as f64)
}
