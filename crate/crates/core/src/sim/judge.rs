//! Pairwise response grading with a judge model.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::prompt::{bindings, TemplateId, TemplateRegistry};
use crate::providers::shape::{opt, req};
use crate::providers::{ChatProvider, JsonShape};

pub const DIMENSIONS: [&str; 6] = ["AC", "LC", "RMR", "ER", "Pers", "LF"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub time: String,
    pub content: String,
}

/// One line of the pairs file. Responses not supplied are generated: the
/// system response sees the memories, the baseline does not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgePair {
    pub query: String,
    #[serde(default)]
    pub memory: Vec<MemoryEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_response: Option<String>,
}

pub fn read_pairs(text: &str) -> Result<Vec<JudgePair>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::InvalidConfig(format!("pairs line {}: {e}", i + 1))))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Scores {
    #[serde(rename = "AC")]
    pub ac: f64,
    #[serde(rename = "LC")]
    pub lc: f64,
    #[serde(rename = "RMR")]
    pub rmr: f64,
    #[serde(rename = "ER")]
    pub er: f64,
    #[serde(rename = "Pers")]
    pub pers: f64,
    #[serde(rename = "LF")]
    pub lf: f64,
}

impl Scores {
    pub fn to_array(self) -> [f64; 6] {
        [self.ac, self.lc, self.rmr, self.er, self.pers, self.lf]
    }

    fn from_array(a: [f64; 6]) -> Self {
        Scores { ac: a[0], lc: a[1], rmr: a[2], er: a[3], pers: a[4], lf: a[5] }
    }

    pub fn mean(self) -> f64 {
        self.to_array().iter().sum::<f64>() / 6.0
    }
}

pub fn verdict_shape() -> JsonShape {
    let scores = || JsonShape::object(DIMENSIONS.map(|d| req(d, JsonShape::Number)));
    JsonShape::object([req(
        "evaluation",
        JsonShape::object([
            req("response_a", scores()),
            req("response_b", scores()),
            opt("rationale", JsonShape::String),
        ]),
    )])
}

/// Scores for one response, each required to lie in 1..=5.
pub fn parse_scores(v: &Value) -> Result<Scores> {
    let mut a = [0.0; 6];
    for (slot, d) in a.iter_mut().zip(DIMENSIONS) {
        let s = v[d].as_f64().ok_or_else(|| Error::ShapeInvalid(format!("missing score {d}")))?;
        if !(1.0..=5.0).contains(&s) {
            return Err(Error::ShapeInvalid(format!("score {d} = {s} outside 1..5")));
        }
        *slot = s;
    }
    Ok(Scores::from_array(a))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub index: usize,
    pub query: String,
    /// The system response was shown as response B.
    pub swapped: bool,
    pub system: Scores,
    pub baseline: Scores,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Skipped {
    pub index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JudgeReport {
    pub verdicts: Vec<Verdict>,
    pub skipped: Vec<Skipped>,
    pub system_mean: Scores,
    pub baseline_mean: Scores,
}

fn history(pair: &JudgePair) -> String {
    pair.memory.iter().map(|m| format!("[{}] {}", m.time, m.content)).collect::<Vec<_>>().join("\n")
}

fn responses(chat: &dyn ChatProvider, templates: &TemplateRegistry, pair: &JudgePair) -> Result<(String, String)> {
    let hist = history(pair);
    let system = match &pair.system_response {
        Some(r) => r.clone(),
        None => chat.complete(&templates.render(
            TemplateId::Generate,
            &bindings([("question", pair.query.as_str()), ("messages", ""), ("user_info", hist.as_str())]),
        )?)?,
    };
    let baseline = match &pair.baseline_response {
        Some(r) => r.clone(),
        None => chat.complete(
            &templates
                .render(TemplateId::RoutingA, &bindings([("question", pair.query.as_str()), ("messages", "")]))?,
        )?,
    };
    Ok((system, baseline))
}

fn judge_one(
    chat: &dyn ChatProvider,
    templates: &TemplateRegistry,
    index: usize,
    pair: &JudgePair,
    swapped: bool,
) -> Result<Verdict> {
    let (system, baseline) = responses(chat, templates, pair)?;
    let (a, b) = if swapped { (&baseline, &system) } else { (&system, &baseline) };
    let prompt = templates.render(
        TemplateId::Judge,
        &bindings([
            ("query", pair.query.as_str()),
            ("history", history(pair).as_str()),
            ("response_a", a.as_str()),
            ("response_b", b.as_str()),
        ]),
    )?;
    let doc = chat.structured(&prompt, &verdict_shape())?;
    let eval = &doc["evaluation"];
    let (sa, sb) = (parse_scores(&eval["response_a"])?, parse_scores(&eval["response_b"])?);
    let (sys, base) = if swapped { (sb, sa) } else { (sa, sb) };
    Ok(Verdict {
        index,
        query: pair.query.clone(),
        swapped,
        system: sys,
        baseline: base,
        rationale: eval["rationale"].as_str().unwrap_or_default().to_string(),
    })
}

/// Grade every pair. The A/B order is drawn per pair from `seed` and undone
/// before aggregation; pairs whose calls fail are skipped and reported.
pub fn run_judge(chat: &dyn ChatProvider, templates: &TemplateRegistry, pairs: &[JudgePair], seed: u64) -> JudgeReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut verdicts = Vec::new();
    let mut skipped = Vec::new();
    for (index, pair) in pairs.iter().enumerate() {
        let swapped = rng.gen_bool(0.5);
        match judge_one(chat, templates, index, pair, swapped) {
            Ok(v) => verdicts.push(v),
            Err(e) => {
                tracing::warn!(index, error = %e, "judge pair skipped");
                skipped.push(Skipped { index, error: e.to_string() });
            }
        }
    }
    let mean = |f: fn(&Verdict) -> Scores| {
        let mut acc = [0.0; 6];
        for v in &verdicts {
            for (a, s) in acc.iter_mut().zip(f(v).to_array()) {
                *a += s;
            }
        }
        let n = verdicts.len().max(1) as f64;
        Scores::from_array(acc.map(|a| a / n))
    };
    JudgeReport { system_mean: mean(|v| v.system), baseline_mean: mean(|v| v.baseline), verdicts, skipped }
}

/// Mean scores as a table: one row per system, one column per dimension.
pub fn format_table(report: &JudgeReport) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<10}", "System");
    for d in DIMENSIONS {
        let _ = write!(out, " {d:>5}");
    }
    let _ = writeln!(out, " {:>5}", "Avg");
    for (name, s) in [("dam", report.system_mean), ("baseline", report.baseline_mean)] {
        let _ = write!(out, "{name:<10}");
        for v in s.to_array() {
            let _ = write!(out, " {v:>5.2}");
        }
        let _ = writeln!(out, " {:>5.2}", s.mean());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::MockChat;

    fn pairs(n: usize) -> Vec<JudgePair> {
        (0..n)
            .map(|i| JudgePair {
                query: format!("How do I feel about coffee {i}?"),
                memory: vec![MemoryEntry { time: "2024-01-01".into(), content: "I love coffee".into() }],
                system_response: None,
                baseline_response: None,
            })
            .collect()
    }

    #[test]
    fn mock_verdicts_have_six_scores_each() {
        let r = run_judge(&MockChat, &TemplateRegistry::builtin(), &pairs(12), 5);
        assert_eq!(r.verdicts.len(), 12);
        assert!(r.skipped.is_empty());
        for v in &r.verdicts {
            for s in v.system.to_array().into_iter().chain(v.baseline.to_array()) {
                assert!((1.0..=5.0).contains(&s));
            }
        }
        let swaps: Vec<bool> = r.verdicts.iter().map(|v| v.swapped).collect();
        assert!(swaps.contains(&true) && swaps.contains(&false));
        assert_eq!(r, run_judge(&MockChat, &TemplateRegistry::builtin(), &pairs(12), 5));
        let table = format_table(&r);
        assert!(table.starts_with("System"));
        assert_eq!(table.lines().count(), 3);
    }

    #[test]
    fn out_of_range_scores_rejected() {
        let v = serde_json::json!({"AC": 6, "LC": 1, "RMR": 1, "ER": 1, "Pers": 1, "LF": 1});
        assert!(parse_scores(&v).is_err());
    }
}
