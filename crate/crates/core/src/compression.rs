//! Entropy-driven maintenance of the store: folding evidence into units,
//! merging duplicates, deleting persistently confused low-weight units and
//! rejecting evidence that is too uncertain to use.
//!
//! Pass planning ([`plan_pass`]) reads a store snapshot and is pure; applying
//! the plan ([`apply_pass`]) is the only step that writes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::agents::summary::{fold_summary, merge_summaries};
use crate::belief::{Evidence, MemoryUnit, SentimentProfile, Timestamp};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::key::{canonicalize, UnitKey};
use crate::providers::EmbeddingProvider;
use crate::store::MemoryStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionKind {
    Update,
    Integrate,
    Delete,
    Discard,
    CreateNew,
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressionAction {
    pub kind: ActionKind,
    pub targets: Vec<UnitKey>,
    /// The unit as written, for Update, Integrate and CreateNew.
    pub result: Option<MemoryUnit>,
    pub rationale: String,
    /// Entropy of each target before the action (of the evidence for
    /// Discard and CreateNew).
    pub entropy_before: Vec<f64>,
    pub entropy_after: Option<f64>,
    /// The numeric update committed but the summary could not be refreshed.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub summary_stale: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionPolicy {
    pub tau_high: f64,
    pub tau_low: f64,
    pub discard_entropy: f64,
    pub w_min: f64,
    pub persistence_n: u32,
    pub integrate_similarity: f64,
}

impl Default for CompressionPolicy {
    fn default() -> Self {
        Self::from(&Config::default())
    }
}

impl From<&Config> for CompressionPolicy {
    fn from(c: &Config) -> Self {
        Self {
            tau_high: c.tau_high,
            tau_low: c.tau_low,
            discard_entropy: c.discard_entropy,
            w_min: c.w_min,
            persistence_n: c.persistence_n,
            integrate_similarity: c.integrate_similarity,
        }
    }
}

/// Produces summary text when units change.
pub trait Summarizer {
    fn refresh(&self, unit: &MemoryUnit, description: &str) -> Result<String>;

    fn merge(&self, units: &[&MemoryUnit]) -> Result<String> {
        Ok(merge_summaries(units))
    }
}

/// The deterministic concatenation rule, without a provider.
#[derive(Debug, Default, Clone, Copy)]
pub struct FoldSummarizer;

impl Summarizer for FoldSummarizer {
    fn refresh(&self, unit: &MemoryUnit, description: &str) -> Result<String> {
        Ok(fold_summary(&unit.summary, description))
    }
}

/// Fold one validated piece of evidence into the store.
///
/// Evidence above the discard threshold is rejected untouched. Otherwise it
/// updates the unit with the same canonical key, or creates one. A failed
/// summary refresh still commits the numeric update and flags the action.
pub fn ingest_evidence(
    store: &mut MemoryStore,
    ev: &Evidence,
    policy: &CompressionPolicy,
    embedder: &dyn EmbeddingProvider,
    summarizer: &dyn Summarizer,
    now: Timestamp,
) -> Result<CompressionAction> {
    let h = ev.entropy()?;
    let key = ev.key();
    if h > policy.discard_entropy {
        return Ok(CompressionAction {
            kind: ActionKind::Discard,
            targets: vec![key],
            result: None,
            rationale: format!("evidence entropy {h:.4} > {}", policy.discard_entropy),
            entropy_before: vec![h],
            entropy_after: None,
            summary_stale: false,
        });
    }

    let Some(existing) = store.find_canonical(&key).into_iter().next() else {
        let unit = MemoryUnit::from_evidence(ev, now)?;
        let emb = embedder.embed(&unit.summary)?;
        let after = unit.entropy();
        let key = store.put(unit.clone(), emb)?;
        return Ok(CompressionAction {
            kind: ActionKind::CreateNew,
            targets: vec![key],
            result: Some(unit),
            rationale: "no unit for this object and aspect".into(),
            entropy_before: vec![h],
            entropy_after: Some(after),
            summary_stale: false,
        });
    };

    let old = store.get(&existing).expect("canonical index points at a stored unit").clone();
    let mut unit = old.clone();
    if unit.weight + ev.strength > 0.0 {
        unit.absorb(&ev.confidences, ev.strength, now)?;
    } else {
        // weightless evidence on a weightless unit: nothing to average
        unit.updated_at = unit.updated_at.max(now);
    }
    if unit.entropy() <= policy.tau_high {
        unit.high_entropy_streak = 0;
    }
    if !ev.reason.is_empty() {
        unit.reason = ev.reason.clone();
    }
    let old_emb = store.embedding(&existing).expect("stored unit has an embedding").to_vec();
    let mut stale = false;
    let mut emb = old_emb.clone();
    match summarizer.refresh(&unit, &ev.description) {
        Ok(summary) if summary == unit.summary => {}
        Ok(summary) => match embedder.embed(&summary) {
            Ok(e) => {
                unit.summary = summary;
                emb = e;
            }
            Err(_) => stale = true,
        },
        Err(_) => stale = true,
    }
    store.put(unit.clone(), emb)?;
    Ok(CompressionAction {
        kind: ActionKind::Update,
        targets: vec![existing],
        rationale: format!("W {} -> {}", old.weight, unit.weight),
        entropy_before: vec![old.entropy()],
        entropy_after: Some(unit.entropy()),
        result: Some(unit),
        summary_stale: stale,
    })
}

/// Merge units that share a canonical key. Profiles are weight-averaged
/// (plain-averaged when every weight is zero) and weights summed.
pub fn integrate_units(units: &[&MemoryUnit], summarizer: &dyn Summarizer) -> Result<MemoryUnit> {
    let Some(first) = units.first() else {
        return Err(Error::TooFewUnits(0));
    };
    if units.len() < 2 {
        return Err(Error::TooFewUnits(units.len()));
    }
    let canonical = first.canonical_key();
    if let Some(odd) = units.iter().find(|u| u.canonical_key() != canonical) {
        return Err(Error::KeyMismatch(canonical.to_string(), odd.canonical_key().to_string()));
    }

    let total: f64 = units.iter().map(|u| u.weight).sum();
    let mut acc = [0.0; 3];
    for u in units {
        let w = if total > 0.0 { u.weight / total } else { 1.0 / units.len() as f64 };
        for (a, c) in acc.iter_mut().zip(u.profile().to_array()) {
            *a += w * c;
        }
    }
    let newest = units
        .iter()
        .max_by(|a, b| a.updated_at.cmp(&b.updated_at).then_with(|| b.key().cmp(&a.key())))
        .expect("non-empty");
    let mut merged = MemoryUnit::new(
        &canonical.object_id,
        &canonicalize(&newest.object_type),
        &canonical.aspect,
        SentimentProfile::from_array(acc),
        total,
        &summarizer.merge(units)?,
        units.iter().map(|u| u.created_at).min().expect("non-empty"),
    )?;
    merged.updated_at = units.iter().map(|u| u.updated_at).max().expect("non-empty");
    merged.reason = newest.reason.clone();
    Ok(merged)
}

/// What a pass will do, computed from a snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct PassPlan {
    pub actions: Vec<CompressionAction>,
    /// New streak values for surviving, non-merged units.
    pub streaks: BTreeMap<UnitKey, u32>,
}

pub fn plan_pass(
    store: &MemoryStore,
    keys: &[UnitKey],
    policy: &CompressionPolicy,
    summarizer: &dyn Summarizer,
) -> Result<PassPlan> {
    let mut actions = Vec::new();
    let mut merged: BTreeSet<UnitKey> = BTreeSet::new();

    let canon: BTreeSet<UnitKey> = keys.iter().filter(|k| store.contains(k)).map(UnitKey::canonical).collect();
    for c in &canon {
        let group = store.find_canonical(c);
        if group.len() < 2 {
            continue;
        }
        let units: Vec<&MemoryUnit> = group.iter().map(|k| store.get(k).expect("indexed")).collect();
        let result = integrate_units(&units, summarizer)?;
        actions.push(CompressionAction {
            kind: ActionKind::Integrate,
            entropy_before: units.iter().map(|u| u.entropy()).collect(),
            entropy_after: Some(result.entropy()),
            rationale: format!("{} units share key {c}", group.len()),
            targets: group.clone(),
            result: Some(result),
            summary_stale: false,
        });
        merged.extend(group);
    }

    // merged units start a fresh streak and are not judged in the pass that
    // created them
    let mut streaks = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for key in keys {
        if merged.contains(key) || !seen.insert(key.clone()) {
            continue;
        }
        let Some(unit) = store.get(key) else { continue };
        let h = unit.entropy();
        if h <= policy.tau_high {
            streaks.insert(key.clone(), 0);
            continue;
        }
        let streak = unit.high_entropy_streak.saturating_add(1);
        if unit.weight < policy.w_min && streak >= policy.persistence_n {
            actions.push(CompressionAction {
                kind: ActionKind::Delete,
                targets: vec![key.clone()],
                result: None,
                rationale: format!(
                    "H {h:.4} > {}, W {} < {}, streak {streak} >= {}",
                    policy.tau_high, unit.weight, policy.w_min, policy.persistence_n
                ),
                entropy_before: vec![h],
                entropy_after: None,
                summary_stale: false,
            });
        } else {
            streaks.insert(key.clone(), streak);
        }
    }
    Ok(PassPlan { actions, streaks })
}

pub fn apply_pass(store: &mut MemoryStore, plan: &PassPlan, embedder: &dyn EmbeddingProvider) -> Result<()> {
    // embed first so a provider failure leaves the store untouched
    let mut embedded = Vec::new();
    for action in &plan.actions {
        if let (ActionKind::Integrate, Some(unit)) = (action.kind, &action.result) {
            embedded.push(embedder.embed(&unit.summary)?);
        }
    }
    let mut embedded = embedded.into_iter();
    for action in &plan.actions {
        match action.kind {
            ActionKind::Integrate => {
                for k in &action.targets {
                    store.delete(k)?;
                }
                let unit = action.result.clone().expect("integrate carries a result");
                store.put(unit, embedded.next().expect("one embedding per integrate"))?;
            }
            ActionKind::Delete => {
                store.delete(&action.targets[0])?;
            }
            _ => {}
        }
    }
    for (key, streak) in &plan.streaks {
        if store.get(key).is_some_and(|u| u.high_entropy_streak != *streak) {
            store.update(key, |u| u.high_entropy_streak = *streak)?;
        }
    }
    Ok(())
}

/// Plan and apply one pass over `keys`.
pub fn compress_pass(
    store: &mut MemoryStore,
    keys: &[UnitKey],
    policy: &CompressionPolicy,
    embedder: &dyn EmbeddingProvider,
    summarizer: &dyn Summarizer,
) -> Result<Vec<CompressionAction>> {
    let plan = plan_pass(store, keys, policy, summarizer)?;
    apply_pass(store, &plan, embedder)?;
    Ok(plan.actions)
}

/// Append one JSON line per action to the audit log at `path`.
pub fn append_audit(path: &Path, now: Timestamp, actions: &[CompressionAction]) -> Result<()> {
    if actions.is_empty() {
        return Ok(());
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut buf = Vec::new();
    for a in actions {
        let line = json!({
            "timestamp": now,
            "kind": a.kind,
            "targets": a.targets.iter().map(ToString::to_string).collect::<Vec<_>>(),
            "entropy_before": a.entropy_before,
            "entropy_after": a.entropy_after,
        });
        serde_json::to_writer(&mut buf, &line).expect("audit line serializes");
        buf.push(b'\n');
    }
    f.write_all(&buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::MockEmbedder;

    fn ev(id: &str, aspect: &str, c: [f64; 3], s: f64) -> Evidence {
        Evidence {
            description: format!("{id} {aspect} {c:?}"),
            query: format!("{id} {aspect}"),
            confidences: SentimentProfile::from_array(c),
            strength: s,
            object_id: id.into(),
            object_type: "thing".into(),
            aspect: aspect.into(),
            reason: String::new(),
        }
        .validated()
        .unwrap()
    }

    fn store() -> MemoryStore {
        MemoryStore::new(256, "t")
    }

    #[test]
    fn discard_create_update() {
        let emb = MockEmbedder::new(256);
        let p = CompressionPolicy::default();
        let mut s = store();
        let a = ingest_evidence(&mut s, &ev("x", "y", [1.0, 1.0, 1.0], 3.0), &p, &emb, &FoldSummarizer, 1).unwrap();
        assert_eq!(a.kind, ActionKind::Discard);
        assert!(s.is_empty());

        let a = ingest_evidence(&mut s, &ev("x", "y", [0.8, 0.1, 0.1], 2.0), &p, &emb, &FoldSummarizer, 2).unwrap();
        assert_eq!(a.kind, ActionKind::CreateNew);
        assert_eq!(s.get(&UnitKey::new("x", "y")).unwrap().weight, 2.0);

        let a = ingest_evidence(&mut s, &ev("X ", "Y", [0.2, 0.7, 0.1], 1.0), &p, &emb, &FoldSummarizer, 3).unwrap();
        assert_eq!(a.kind, ActionKind::Update);
        let u = s.get(&UnitKey::new("x", "y")).unwrap();
        assert_eq!(u.weight, 3.0);
        let q = u.profile();
        assert!(
            (q.positive - 0.6).abs() < 1e-12 && (q.negative - 0.3).abs() < 1e-12 && (q.neutral - 0.1).abs() < 1e-12
        );
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn integrate_examples() {
        let unit = |c: [f64; 3], w: f64, id: &str| {
            MemoryUnit::new(id, "t", "a", SentimentProfile::from_array(c), w, "s", 1).unwrap()
        };
        let a = unit([1.0, 0.0, 0.0], 1.0, "x");
        let b = unit([0.0, 1.0, 0.0], 1.0, "X");
        let m = integrate_units(&[&a, &b], &FoldSummarizer).unwrap();
        assert_eq!(m.profile(), SentimentProfile::new(0.5, 0.5, 0.0));
        assert_eq!(m.weight, 2.0);

        let a = unit([0.9, 0.05, 0.05], 3.0, "x");
        let b = unit([0.3, 0.6, 0.1], 1.0, "x ");
        let m = integrate_units(&[&a, &b], &FoldSummarizer).unwrap();
        let p = m.profile();
        assert!((p.positive - 0.75).abs() < 1e-12);
        assert!((p.negative - 0.1875).abs() < 1e-12);
        assert!((p.neutral - 0.0625).abs() < 1e-12);
        assert_eq!(m.weight, 4.0);

        let c = unit([0.3, 0.6, 0.1], 1.0, "z");
        assert!(matches!(integrate_units(&[&a, &c], &FoldSummarizer), Err(Error::KeyMismatch(..))));
        assert!(matches!(integrate_units(&[&a], &FoldSummarizer), Err(Error::TooFewUnits(1))));
    }

    #[test]
    fn delete_after_persistent_high_entropy() {
        let emb = MockEmbedder::new(256);
        let p = CompressionPolicy::default();
        let mut s = store();
        let mut u = MemoryUnit::new("n", "t", "a", SentimentProfile::new(0.4, 0.35, 0.25), 0.5, "noise", 1).unwrap();
        assert!(u.entropy() > 1.4);
        u.high_entropy_streak = 2;
        let key = s.put(u, emb.embed("noise").unwrap()).unwrap();
        let calm = MemoryUnit::new("c", "t", "a", SentimentProfile::new(0.95, 0.05, 0.0), 0.5, "calm", 1).unwrap();
        let mut calm = calm;
        calm.high_entropy_streak = 4;
        let calm_key = s.put(calm, emb.embed("calm").unwrap()).unwrap();

        let actions = compress_pass(&mut s, &[key.clone(), calm_key.clone()], &p, &emb, &FoldSummarizer).unwrap();
        assert_eq!(actions.len(), 1);
        assert_eq!(actions[0].kind, ActionKind::Delete);
        assert!(!s.contains(&key));
        assert_eq!(s.get(&calm_key).unwrap().high_entropy_streak, 0);
        let again = compress_pass(&mut s, &[calm_key], &p, &emb, &FoldSummarizer).unwrap();
        assert!(again.is_empty());
    }

    #[test]
    fn duplicate_keys_merge_in_a_pass() {
        let emb = MockEmbedder::new(256);
        let p = CompressionPolicy::default();
        let mut s = store();
        let a = MemoryUnit::new("coffee", "drink", "taste", SentimentProfile::new(1.0, 0.0, 0.0), 2.0, "a", 1).unwrap();
        let b =
            MemoryUnit::new("Coffee ", "drink", "Taste", SentimentProfile::new(0.0, 1.0, 0.0), 3.0, "b", 2).unwrap();
        let ka = s.put(a, emb.embed("a").unwrap()).unwrap();
        s.put(b, emb.embed("b").unwrap()).unwrap();
        assert_eq!(s.len(), 2);
        let actions = compress_pass(&mut s, &[ka], &p, &emb, &FoldSummarizer).unwrap();
        assert_eq!(actions[0].kind, ActionKind::Integrate);
        assert_eq!(s.len(), 1);
        let m = s.get(&UnitKey::new("coffee", "taste")).unwrap();
        assert_eq!(m.weight, 5.0);
        assert!((m.profile().positive - 0.4).abs() < 1e-12);
        assert_eq!(m.summary, "b; a");
    }
}
