//! Confidence trace of one belief across a scripted observation sequence.

use std::io::{BufRead, Write};

use serde::Serialize;

use crate::belief::{Polarity, SentimentProfile};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::key::UnitKey;
use crate::providers::Observation;
use crate::store::MemoryStore;

use super::ablation::{Mode, SimContext};
use super::stream::{render_text, Triple};

fn coffee(aspect: &str) -> Triple {
    Triple { object_id: "coffee".into(), object_type: "beverage".into(), aspect: aspect.into() }
}

fn observe(t: &Triple, polarity: Polarity, intensity: f64) -> Observation {
    Observation {
        object_id: t.object_id.clone(),
        object_type: t.object_type.clone(),
        aspect: t.aspect.clone(),
        polarity,
        intensity,
        text: render_text(t, polarity, intensity),
    }
}

/// `conflicting` observations alternating positive/negative at
/// `conflict_intensity`, then one positive observation per entry of
/// `consistent`.
pub fn scripted(triple: &Triple, conflicting: usize, conflict_intensity: f64, consistent: &[f64]) -> Vec<Observation> {
    let alternating = (0..conflicting).map(|i| {
        let polarity = if i % 2 == 0 { Polarity::Positive } else { Polarity::Negative };
        observe(triple, polarity, conflict_intensity)
    });
    let steady = consistent.iter().map(|&i| observe(triple, Polarity::Positive, i));
    alternating.chain(steady).collect()
}

/// Intensities rising linearly from 0.8 to 1.0 over `n` observations.
pub fn ramp(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.8],
        _ => (0..n).map(|j| 0.8 + 0.2 * j as f64 / (n - 1) as f64).collect(),
    }
}

/// The default 30-observation coffee/taste script: 10 conflicting at 0.5,
/// then 20 positive ramping from 0.8 to 1.0.
pub fn default_script() -> Vec<Observation> {
    scripted(&coffee("taste"), 10, 0.5, &ramp(20))
}

/// The default script with two packaging observations inserted after
/// observations 12 and 22.
pub fn packaging_script() -> Vec<Observation> {
    let mut s = default_script();
    let pack = coffee("packaging");
    s.insert(22, observe(&pack, Polarity::Negative, 0.7));
    s.insert(12, observe(&pack, Polarity::Negative, 0.6));
    s
}

/// JSON Lines of observations; blank lines are skipped.
pub fn read_script<R: BufRead>(r: R) -> Result<Vec<Observation>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(Observation::from_json(&line).map_err(|e| match e {
            Error::InvalidEvidence(m) => Error::InvalidEvidence(format!("line {}: {m}", i + 1)),
            other => other,
        })?);
    }
    Ok(out)
}

pub fn write_script<W: Write>(script: &[Observation], mut w: W) -> std::io::Result<()> {
    for o in script {
        serde_json::to_writer(&mut w, o)?;
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub turn: usize,
    pub profile: SentimentProfile,
    pub entropy: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    /// The traced unit: the first observation's key.
    pub key: UnitKey,
    /// One row per observation from the first that produced the unit.
    pub rows: Vec<TraceRow>,
    pub store: MemoryStore,
}

impl ConvergenceTrace {
    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }
}

pub fn run_convergence(script: &[Observation], config: &Config) -> Result<ConvergenceTrace> {
    let first = script.first().ok_or_else(|| Error::InvalidConfig("empty convergence script".into()))?;
    let key = UnitKey::new(&first.object_id, &first.aspect);
    let ctx = SimContext::new(config.clone());
    let mut store = ctx.new_store();
    let mut rows = Vec::with_capacity(script.len());
    for (i, obs) in script.iter().enumerate() {
        ctx.ingest(&mut store, obs, Mode::Bayes, i + 1)?;
        if let Some(u) = store.get(&key) {
            rows.push(TraceRow { turn: i + 1, profile: u.profile(), entropy: u.entropy(), weight: u.weight });
        }
    }
    Ok(ConvergenceTrace { key, rows, store })
}

/// CSV with columns `turn,p_pos,p_neg,p_neu,H,W`.
pub fn write_convergence_csv<W: Write>(trace: &ConvergenceTrace, mut w: W) -> std::io::Result<()> {
    writeln!(w, "turn,p_pos,p_neg,p_neu,H,W")?;
    for r in &trace.rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.turn, r.profile.positive, r.profile.negative, r.profile.neutral, r.entropy, r.weight
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_endpoints() {
        let r = ramp(20);
        assert_eq!(r.len(), 20);
        assert_eq!(r[0], 0.8);
        assert!((r[19] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn all_consistent_reaches_certainty() {
        let s = scripted(&coffee("taste"), 0, 0.0, &[1.0; 30]);
        let t = run_convergence(&s, &Config::default()).unwrap();
        let last = t.last().unwrap();
        assert_eq!(last.profile, SentimentProfile::new(1.0, 0.0, 0.0));
        assert_eq!(last.entropy, 0.0);
        assert_eq!(last.weight, 90.0);
    }

    #[test]
    fn script_roundtrips_as_jsonl() {
        let s = packaging_script();
        assert_eq!(s.len(), 32);
        let mut buf = Vec::new();
        write_script(&s, &mut buf).unwrap();
        assert_eq!(read_script(&buf[..]).unwrap(), s);
    }
}
