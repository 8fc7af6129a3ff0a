//! Memory-growth runs with and without belief updating.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::agents::generate::{format_user_info, generate_response};
use crate::agents::{master_step, turn_objective, ChatSummarizer, MasterDeps};
use crate::belief::{MemoryUnit, SentimentProfile};
use crate::clock::{Clock, LogicalClock};
use crate::compression::{ActionKind, CompressionPolicy};
use crate::config::Config;
use crate::error::Result;
use crate::prompt::TemplateRegistry;
use crate::providers::{mock_extract, EmbeddingProvider, MockChat, MockEmbedder, Observation};
use crate::retrieval::{retrieve, QueryKey};
use crate::store::MemoryStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Full master step: update, integrate, delete, discard.
    Bayes,
    /// Append one unit per non-discarded observation.
    Naive,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Bayes => "bayes",
            Mode::Naive => "naive",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bayes" => Ok(Mode::Bayes),
            "naive" => Ok(Mode::Naive),
            other => Err(crate::error::Error::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnRecord {
    pub turn: usize,
    /// Kinds of the actions applied this turn, in order.
    pub actions: Vec<ActionKind>,
    pub stored: bool,
    pub unit_count: usize,
    pub global_entropy: f64,
    pub response: String,
    pub top_summary: Option<String>,
    pub rel: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalUnit {
    pub key: String,
    pub profile: SentimentProfile,
    pub weight: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub mode: Mode,
    pub turns: Vec<TurnRecord>,
    pub final_units: Vec<FinalUnit>,
    pub final_count: usize,
    /// Observations that were not discarded.
    pub stored_count: usize,
    #[serde(skip)]
    pub store: MemoryStore,
}

/// Deterministic providers plus the settings a run needs.
pub struct SimContext {
    pub config: Config,
    pub chat: MockChat,
    pub embedder: MockEmbedder,
    pub templates: TemplateRegistry,
    pub clock: LogicalClock,
}

impl SimContext {
    pub fn new(config: Config) -> Self {
        Self {
            embedder: MockEmbedder::new(config.embed_dim),
            config,
            chat: MockChat::new(),
            templates: TemplateRegistry::builtin(),
            clock: LogicalClock::default(),
        }
    }

    pub fn new_store(&self) -> MemoryStore {
        MemoryStore::new(self.config.embed_dim, self.config.fingerprint())
    }

    /// Ingest one observation into `store`; returns the action kinds applied
    /// and whether the evidence was kept.
    pub fn ingest(
        &self,
        store: &mut MemoryStore,
        obs: &Observation,
        mode: Mode,
        turn: usize,
    ) -> Result<(Vec<ActionKind>, bool)> {
        let ev = mock_extract(obs)?;
        let now = self.clock.now();
        let policy = CompressionPolicy::from(&self.config);
        match mode {
            Mode::Bayes => {
                let summarizer = ChatSummarizer { chat: &self.chat, templates: &self.templates };
                let deps = MasterDeps {
                    chat: &self.chat,
                    embedder: &self.embedder,
                    templates: &self.templates,
                    summarizer: &summarizer,
                    policy: &policy,
                    top_k: self.config.top_k,
                };
                let out = master_step(store, &deps, &ev, now)?;
                let kinds: Vec<ActionKind> = out.actions.iter().map(|a| a.kind).collect();
                let stored = kinds.first() != Some(&ActionKind::Discard);
                Ok((kinds, stored))
            }
            Mode::Naive => {
                if ev.entropy()? > policy.discard_entropy {
                    return Ok((vec![ActionKind::Discard], false));
                }
                let mut unit = MemoryUnit::from_evidence(&ev, now)?;
                unit.object_id = format!("{}#{turn}", unit.object_id);
                let emb = self.embedder.embed(&unit.summary)?;
                store.put(unit, emb)?;
                Ok((vec![ActionKind::CreateNew], true))
            }
        }
    }

    /// Reply to the observation text with whatever the store recalls for it,
    /// and score the turn.
    fn respond(&self, store: &MemoryStore, obs: &Observation) -> Result<(String, Option<String>, f64)> {
        let query =
            QueryKey::new(Some(&obs.object_type), Some(&obs.aspect), &format!("{} {}", obs.object_id, obs.aspect))?;
        let hits = retrieve(store, &self.embedder, &query, self.config.top_k)?.hits;
        let info = format_user_info(store, &hits);
        let (response, _) = generate_response(&self.chat, &self.templates, &obs.text, "", &info);
        let top = hits.first().and_then(|h| store.get(&h.key)).map(|u| u.summary.clone());
        let rel = turn_objective(&self.embedder, &response, top.as_deref(), 0, 0.0)?;
        Ok((response, top, rel))
    }
}

pub fn run_ablation(observations: &[Observation], mode: Mode, config: &Config) -> Result<SimReport> {
    let ctx = SimContext::new(config.clone());
    let mut store = ctx.new_store();
    let mut turns = Vec::with_capacity(observations.len());
    let mut stored_count = 0;
    for (i, obs) in observations.iter().enumerate() {
        let turn = i + 1;
        let (actions, stored) = ctx.ingest(&mut store, obs, mode, turn)?;
        stored_count += usize::from(stored);
        let (response, top_summary, rel) = ctx.respond(&store, obs)?;
        turns.push(TurnRecord {
            turn,
            actions,
            stored,
            unit_count: store.len(),
            global_entropy: store.global_entropy(),
            objective: rel - config.lambda * store.len() as f64,
            response,
            top_summary,
            rel,
        });
    }
    let final_units = store
        .iter()
        .map(|(k, u, _)| FinalUnit { key: k.to_string(), profile: u.profile(), weight: u.weight, entropy: u.entropy() })
        .collect();
    Ok(SimReport { mode, turns, final_units, final_count: store.len(), stored_count, store })
}

/// Per-turn CSV: `turn,actions,unit_count,global_entropy,rel,objective`.
pub fn write_ablation_csv<W: Write>(report: &SimReport, mut w: W) -> std::io::Result<()> {
    writeln!(w, "turn,actions,unit_count,global_entropy,rel,objective")?;
    for t in &report.turns {
        let actions = t.actions.iter().map(ToString::to_string).collect::<Vec<_>>().join("+");
        writeln!(w, "{},{},{},{},{},{}", t.turn, actions, t.unit_count, t.global_entropy, t.rel, t.objective)?;
    }
    Ok(())
}

pub fn compression_ratio(bayes_count: usize, naive_count: usize) -> f64 {
    if naive_count == 0 {
        return 0.0;
    }
    1.0 - bayes_count as f64 / naive_count as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundSummary {
    pub seed: u64,
    pub bayes_count: usize,
    pub naive_count: usize,
    pub compression_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Aggregate {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
        Aggregate { min, max, mean }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundsReport {
    pub rounds: Vec<RoundSummary>,
    pub bayes_count: Aggregate,
    pub naive_count: Aggregate,
    pub compression_ratio: Aggregate,
}

/// Both modes over the same stream for each seed.
pub fn run_rounds(seeds: &[u64], turns: usize, vocab: usize, noise: f64, config: &Config) -> Result<RoundsReport> {
    let rounds = seeds
        .iter()
        .map(|&seed| {
            let spec = super::StreamSpec { noise, ..super::StreamSpec::new(seed, turns, vocab) };
            let stream = super::generate(&spec);
            let bayes = run_ablation(&stream.observations, Mode::Bayes, config)?;
            let naive = run_ablation(&stream.observations, Mode::Naive, config)?;
            Ok(RoundSummary {
                seed,
                bayes_count: bayes.final_count,
                naive_count: naive.final_count,
                compression_ratio: compression_ratio(bayes.final_count, naive.final_count),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let col = |f: fn(&RoundSummary) -> f64| Aggregate::of(&rounds.iter().map(f).collect::<Vec<_>>());
    Ok(RoundsReport {
        bayes_count: col(|r| r.bayes_count as f64),
        naive_count: col(|r| r.naive_count as f64),
        compression_ratio: col(|r| r.compression_ratio),
        rounds,
    })
}
