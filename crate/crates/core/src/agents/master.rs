//! The master step: retrieval, categorization, ingestion and a compression
//! pass. The engine does all arithmetic; the chat model (when live) only
//! sorts the candidate memories into categories.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::belief::{Evidence, MemoryUnit, Timestamp};
use crate::compression::{compress_pass, ingest_evidence, CompressionAction, CompressionPolicy, Summarizer};
use crate::error::Result;
use crate::key::{canonicalize, UnitKey};
use crate::prompt::{bindings, TemplateId, TemplateRegistry};
use crate::providers::shape::req;
use crate::providers::{ChatProvider, EmbeddingProvider, JsonShape};
use crate::retrieval::{retrieve, QueryKey, RetrievalResult};
use crate::store::MemoryStore;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirInfo {
    pub object_id: String,
    pub object_type: String,
    pub aspect: String,
}

impl DirInfo {
    fn same_key(&self, other: &DirInfo) -> bool {
        canonicalize(&self.object_id) == canonicalize(&other.object_id)
            && canonicalize(&self.aspect) == canonicalize(&other.aspect)
    }
}

/// A retrieved memory as shown to the master prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMemory {
    pub key: String,
    pub dir_info: DirInfo,
    pub content: String,
    pub p_pos: f64,
    pub p_neg: f64,
    pub p_neu: f64,
    pub weight: f64,
    #[serde(rename = "H")]
    pub h: f64,
}

impl CandidateMemory {
    pub fn from_unit(unit: &MemoryUnit) -> Self {
        let p = unit.profile();
        Self {
            key: unit.key().to_string(),
            dir_info: DirInfo {
                object_id: unit.object_id.clone(),
                object_type: unit.object_type.clone(),
                aspect: unit.aspect.clone(),
            },
            content: unit.summary.clone(),
            p_pos: p.positive,
            p_neg: p.negative,
            p_neu: p.neutral,
            weight: unit.weight,
            h: unit.entropy(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SameEntry {
    pub dir_info: DirInfo,
    pub new_content: String,
    pub p_pos: f64,
    pub p_neg: f64,
    pub p_neu: f64,
    pub key: String,
    pub weight: f64,
    #[serde(rename = "S")]
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelatedEntry {
    pub dir_info: DirInfo,
    pub content: String,
    pub p_pos: f64,
    pub p_neg: f64,
    pub p_neu: f64,
    pub key: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrrelevantEntry {
    pub dir_info: DirInfo,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MasterCategorization {
    #[serde(default)]
    pub same_or_high_related: Vec<SameEntry>,
    #[serde(default)]
    pub related: Vec<RelatedEntry>,
    #[serde(default)]
    pub irrelevant: Vec<IrrelevantEntry>,
}

impl MasterCategorization {
    /// True when the three lists together name every candidate exactly once.
    pub fn partitions(&self, candidates: &[CandidateMemory]) -> bool {
        let mut seen = BTreeSet::new();
        let mut count = 0;
        let mut note = |k: String| {
            count += 1;
            seen.insert(k);
        };
        self.same_or_high_related.iter().for_each(|e| note(e.key.clone()));
        self.related.iter().for_each(|e| note(e.key.clone()));
        for e in &self.irrelevant {
            let key = candidates.iter().find(|c| c.dir_info == e.dir_info).map(|c| c.key.clone());
            note(key.unwrap_or_default());
        }
        let expected: BTreeSet<String> = candidates.iter().map(|c| c.key.clone()).collect();
        count == candidates.len() && seen == expected
    }
}

/// Deterministic categorization: same canonical key is same_or_high_related,
/// same object type is related, everything else irrelevant.
pub fn categorize_by_rules(
    candidates: &[CandidateMemory],
    incoming: &DirInfo,
    content: &str,
    strength: f64,
) -> MasterCategorization {
    let mut out = MasterCategorization::default();
    for c in candidates {
        if c.dir_info.same_key(incoming) {
            out.same_or_high_related.push(SameEntry {
                dir_info: c.dir_info.clone(),
                new_content: content.to_string(),
                p_pos: c.p_pos,
                p_neg: c.p_neg,
                p_neu: c.p_neu,
                key: c.key.clone(),
                weight: c.weight,
                s: strength,
            });
        } else if canonicalize(&c.dir_info.object_type) == canonicalize(&incoming.object_type) {
            out.related.push(RelatedEntry {
                dir_info: c.dir_info.clone(),
                content: c.content.clone(),
                p_pos: c.p_pos,
                p_neg: c.p_neg,
                p_neu: c.p_neu,
                key: c.key.clone(),
                weight: c.weight,
            });
        } else {
            out.irrelevant.push(IrrelevantEntry { dir_info: c.dir_info.clone(), content: c.content.clone() });
        }
    }
    out
}

pub fn categorization_shape() -> JsonShape {
    JsonShape::object([
        req("same_or_high_related", JsonShape::array(JsonShape::Any)),
        req("related", JsonShape::array(JsonShape::Any)),
        req("irrelevant", JsonShape::array(JsonShape::Any)),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CategorizationSource {
    Model,
    Rules,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MasterOutcome {
    pub retrieved: RetrievalResult,
    pub categorization: MasterCategorization,
    pub source: CategorizationSource,
    pub actions: Vec<CompressionAction>,
}

/// Everything the master step needs besides the store.
pub struct MasterDeps<'a> {
    pub chat: &'a dyn ChatProvider,
    pub embedder: &'a dyn EmbeddingProvider,
    pub templates: &'a TemplateRegistry,
    pub summarizer: &'a dyn Summarizer,
    pub policy: &'a CompressionPolicy,
    pub top_k: usize,
}

fn ask_model(
    deps: &MasterDeps<'_>,
    candidates: &[CandidateMemory],
    ev: &Evidence,
    incoming: &DirInfo,
) -> Option<MasterCategorization> {
    let user_info = json!({
        "dir_info": incoming,
        "content": ev.description,
        "p_pos": ev.confidences.positive,
        "p_neg": ev.confidences.negative,
        "p_neu": ev.confidences.neutral,
        "S": ev.strength,
    });
    let prompt = deps
        .templates
        .render(
            TemplateId::Master,
            &bindings([
                ("second_search", serde_json::to_string(candidates).ok()?),
                ("first_search", serde_json::to_string(incoming).ok()?),
                ("user_info", user_info.to_string()),
            ]),
        )
        .ok()?;
    let doc = deps.chat.structured(&prompt, &categorization_shape()).ok()?;
    let cat: MasterCategorization = serde_json::from_value(doc).ok()?;
    cat.partitions(candidates).then_some(cat)
}

pub fn master_step(
    store: &mut MemoryStore,
    deps: &MasterDeps<'_>,
    ev: &Evidence,
    now: Timestamp,
) -> Result<MasterOutcome> {
    let query = QueryKey::new(Some(&ev.object_type), Some(&ev.aspect), &ev.query)?;
    let retrieved = retrieve(store, deps.embedder, &query, deps.top_k)?;
    let candidates: Vec<CandidateMemory> =
        retrieved.keys().filter_map(|k| store.get(k)).map(CandidateMemory::from_unit).collect();
    let incoming =
        DirInfo { object_id: ev.object_id.clone(), object_type: ev.object_type.clone(), aspect: ev.aspect.clone() };

    let (categorization, source) = match ask_model(deps, &candidates, ev, &incoming) {
        Some(cat) => (cat, CategorizationSource::Model),
        None => {
            (categorize_by_rules(&candidates, &incoming, &ev.description, ev.strength), CategorizationSource::Rules)
        }
    };

    let mut actions = vec![ingest_evidence(store, ev, deps.policy, deps.embedder, deps.summarizer, now)?];
    let keys: Vec<UnitKey> = retrieved.keys().filter(|k| store.contains(k)).cloned().collect();
    actions.extend(compress_pass(store, &keys, deps.policy, deps.embedder, deps.summarizer)?);
    Ok(MasterOutcome { retrieved, categorization, source, actions })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(id: &str, ty: &str, aspect: &str) -> CandidateMemory {
        CandidateMemory {
            key: format!("{id}/{aspect}"),
            dir_info: DirInfo { object_id: id.into(), object_type: ty.into(), aspect: aspect.into() },
            content: String::new(),
            p_pos: 1.0,
            p_neg: 0.0,
            p_neu: 0.0,
            weight: 1.0,
            h: 0.0,
        }
    }

    #[test]
    fn rules_partition_candidates() {
        let cands =
            [cand("coffee", "beverage", "taste"), cand("tea", "beverage", "taste"), cand("car", "vehicle", "speed")];
        let incoming = DirInfo { object_id: "Coffee".into(), object_type: "beverage".into(), aspect: "taste".into() };
        let cat = categorize_by_rules(&cands, &incoming, "new", 2.0);
        assert_eq!(cat.same_or_high_related.len(), 1);
        assert_eq!(cat.related.len(), 1);
        assert_eq!(cat.irrelevant.len(), 1);
        assert!(cat.partitions(&cands));
        let mut broken = cat.clone();
        broken.related.clear();
        assert!(!broken.partitions(&cands));
    }
}
