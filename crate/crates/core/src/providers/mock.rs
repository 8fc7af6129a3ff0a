//! Deterministic offline providers.
//!
//! `MockEmbedder` is signed feature hashing into a fixed number of buckets.
//! `MockChat` answers each template with a rule-based stand-in for the model:
//! a small lexicon drives routing and extraction, the master prompt is
//! answered with the rule categorization, and generation echoes the top
//! memory so end-to-end runs are reproducible and assertable.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::agents::master::{categorize_by_rules, CandidateMemory, DirInfo};
use crate::agents::summary::fold_summary;
use crate::belief::{Evidence, Polarity, SentimentProfile, MAX_STRENGTH};
use crate::error::{Error, Result};
use crate::key::canonicalize;
use crate::prompt::{Prompt, TemplateId};
use crate::providers::{ChatProvider, EmbeddingProvider};
use crate::sim::judge::DIMENSIONS;

/// Seed mixed into every token hash of the mock embedder.
pub const MOCK_EMBED_SEED: u64 = 0x5eed_da11_0b5e_55ed;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

// splitmix64 finalizer; spreads FNV's weak low bits before bucketing
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeded 64-bit token hash used by the mock embedder.
pub fn token_hash(token: &str) -> u64 {
    mix(fnv1a(MOCK_EMBED_SEED, token.as_bytes()))
}

/// Lower-case and split on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase().split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_string).collect()
}

/// Signed feature-hashing embedding, L2-normalized. Texts with no tokens (or
/// whose tokens cancel exactly) map to the first basis vector.
pub fn mock_embed(text: &str, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    for tok in tokenize(text) {
        let h = token_hash(&tok);
        let bucket = (h % dim as u64) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        v[bucket] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v[0] = 1.0;
        return v;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

#[derive(Debug, Clone)]
pub struct MockEmbedder {
    dim: usize,
}

impl MockEmbedder {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self::new(256)
    }
}

impl EmbeddingProvider for MockEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        Ok(mock_embed(text, self.dim))
    }

    fn dimension(&self) -> usize {
        self.dim
    }
}

/// A structured synthetic observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub object_id: String,
    pub object_type: String,
    pub aspect: String,
    pub polarity: Polarity,
    pub intensity: f64,
    pub text: String,
}

#[derive(Deserialize)]
struct RawObservation {
    object_id: String,
    object_type: String,
    aspect: String,
    polarity: String,
    intensity: f64,
    text: String,
}

impl Observation {
    /// Parse one JSON object; an unrecognized polarity is reported as
    /// [`Error::UnknownPolarity`].
    pub fn from_json(line: &str) -> Result<Observation> {
        let raw: RawObservation = serde_json::from_str(line).map_err(|e| Error::InvalidEvidence(e.to_string()))?;
        Ok(Observation {
            polarity: raw.polarity.parse()?,
            object_id: raw.object_id,
            object_type: raw.object_type,
            aspect: raw.aspect,
            intensity: raw.intensity,
            text: raw.text,
        })
    }
}

/// Confidences for an observation: `0.5 + 0.5 * intensity` on the stated
/// polarity, the rest split evenly over the other two.
pub fn mock_confidences(polarity: Polarity, intensity: f64) -> SentimentProfile {
    let i = if intensity.is_nan() { 0.0 } else { intensity.clamp(0.0, 1.0) };
    let dominant = 0.5 + 0.5 * i;
    let other = (1.0 - dominant) / 2.0;
    let mut c = [other; 3];
    c[polarity.index()] = dominant;
    SentimentProfile::from_array(c)
}

pub fn mock_strength(intensity: f64) -> f64 {
    let i = if intensity.is_nan() { 0.0 } else { intensity };
    (MAX_STRENGTH * i).clamp(0.0, MAX_STRENGTH)
}

/// Map a structured observation to evidence.
pub fn mock_extract(obs: &Observation) -> Result<Evidence> {
    Evidence {
        description: obs.text.clone(),
        query: format!("{} {}", canonicalize(&obs.object_id), canonicalize(&obs.aspect)),
        confidences: mock_confidences(obs.polarity, obs.intensity),
        strength: mock_strength(obs.intensity),
        object_id: obs.object_id.clone(),
        object_type: obs.object_type.clone(),
        aspect: obs.aspect.clone(),
        reason: String::new(),
    }
    .validated()
}

const AFFECT: &[(&str, Polarity, f64)] = &[
    ("love", Polarity::Positive, 0.9),
    ("loved", Polarity::Positive, 0.9),
    ("adore", Polarity::Positive, 0.95),
    ("like", Polarity::Positive, 0.6),
    ("likes", Polarity::Positive, 0.6),
    ("enjoy", Polarity::Positive, 0.7),
    ("amazing", Polarity::Positive, 0.85),
    ("great", Polarity::Positive, 0.7),
    ("good", Polarity::Positive, 0.5),
    ("nice", Polarity::Positive, 0.5),
    ("excellent", Polarity::Positive, 0.85),
    ("fantastic", Polarity::Positive, 0.9),
    ("happy", Polarity::Positive, 0.7),
    ("satisfying", Polarity::Positive, 0.6),
    ("comforting", Polarity::Positive, 0.6),
    ("delicious", Polarity::Positive, 0.8),
    ("hate", Polarity::Negative, 0.9),
    ("hated", Polarity::Negative, 0.9),
    ("dislike", Polarity::Negative, 0.6),
    ("terrible", Polarity::Negative, 0.85),
    ("awful", Polarity::Negative, 0.85),
    ("horrible", Polarity::Negative, 0.9),
    ("bad", Polarity::Negative, 0.5),
    ("frustrating", Polarity::Negative, 0.7),
    ("disappointing", Polarity::Negative, 0.65),
    ("regret", Polarity::Negative, 0.7),
    ("annoying", Polarity::Negative, 0.6),
    ("okay", Polarity::Neutral, 0.5),
    ("ok", Polarity::Neutral, 0.5),
    ("fine", Polarity::Neutral, 0.5),
    ("meh", Polarity::Neutral, 0.5),
    ("indifferent", Polarity::Neutral, 0.6),
];

const INTENSIFIERS: &[&str] = &["really", "so", "absolutely", "very", "extremely", "totally", "truly"];
const NEGATORS: &[&str] = &["not", "don", "dont", "never", "isn", "doesn"];

const OBJECTS: &[(&str, &str)] = &[
    ("espresso machine", "appliance"),
    ("coffee", "beverage"),
    ("espresso", "beverage"),
    ("latte", "beverage"),
    ("tea", "beverage"),
    ("juice", "beverage"),
    ("pizza", "food"),
    ("sushi", "food"),
    ("chocolate", "food"),
    ("phone", "product"),
    ("laptop", "product"),
    ("camera", "product"),
    ("headphones", "product"),
    ("sweater", "clothing"),
    ("shoes", "clothing"),
    ("restaurant", "place"),
    ("cafe", "place"),
    ("park", "place"),
    ("movie", "movie"),
    ("book", "book"),
    ("music", "art"),
    ("rain", "weather"),
    ("weather", "weather"),
    ("running", "activity"),
    ("swimming", "activity"),
    ("job", "work"),
    ("car", "vehicle"),
];

const ASPECTS: &[(&str, &str)] = &[
    ("taste", "taste"),
    ("tastes", "taste"),
    ("flavor", "taste"),
    ("flavour", "taste"),
    ("bitterness", "taste"),
    ("mouthfeel", "taste"),
    ("aroma", "aroma"),
    ("smell", "aroma"),
    ("price", "price"),
    ("expensive", "price"),
    ("cheap", "price"),
    ("cost", "price"),
    ("packaging", "packaging"),
    ("package", "packaging"),
    ("box", "packaging"),
    ("service", "service"),
    ("waiters", "service"),
    ("staff", "service"),
    ("quality", "quality"),
    ("battery", "battery"),
    ("design", "design"),
    ("plot", "plot"),
    ("acting", "acting"),
    ("comfort", "comfort"),
    ("speed", "speed"),
];

/// What the lexicon can read out of a sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct TextAnalysis {
    pub affect: Option<(Polarity, f64)>,
    pub object: Option<(String, String)>,
    pub aspect: String,
}

pub fn analyze_text(text: &str) -> TextAnalysis {
    let tokens = tokenize(text);
    let mut affect: Option<(Polarity, f64)> = None;
    for (i, tok) in tokens.iter().enumerate() {
        let Some(&(_, polarity, base)) = AFFECT.iter().find(|(w, _, _)| w == tok) else {
            continue;
        };
        let window = &tokens[i.saturating_sub(3)..i];
        let boost = window.iter().filter(|t| INTENSIFIERS.contains(&t.as_str())).count() as f64 * 0.1;
        let negated = window.iter().any(|t| NEGATORS.contains(&t.as_str()));
        let (polarity, intensity) = match (negated, polarity) {
            (true, Polarity::Positive) => (Polarity::Negative, base * 0.8),
            (true, Polarity::Negative) => (Polarity::Positive, base * 0.8),
            (_, p) => (p, base),
        };
        let intensity = (intensity + boost).min(1.0);
        if affect.is_none_or(|(_, best)| intensity > best) {
            affect = Some((polarity, intensity));
        }
    }

    let joined = format!(" {} ", tokens.join(" "));
    let object = OBJECTS
        .iter()
        .find(|(name, _)| joined.contains(&format!(" {name} ")))
        .map(|(name, ty)| (name.to_string(), ty.to_string()));
    let aspect = tokens
        .iter()
        .find_map(|t| ASPECTS.iter().find(|(w, _)| w == t).map(|(_, a)| a.to_string()))
        .unwrap_or_else(|| "overall".to_string());

    TextAnalysis { affect, object, aspect }
}

/// Rule-based stand-in for the chat model.
#[derive(Debug, Default, Clone)]
pub struct MockChat;

impl MockChat {
    pub fn new() -> Self {
        Self
    }
}

fn binding<'a>(prompt: &'a Prompt, name: &str) -> &'a str {
    prompt.bindings.get(name).map(String::as_str).unwrap_or("")
}

fn judge_score(dimension: &str, response: &str) -> u64 {
    1 + fnv1a(MOCK_EMBED_SEED, format!("{dimension}|{response}").as_bytes()) % 5
}

impl ChatProvider for MockChat {
    fn complete(&self, prompt: &Prompt) -> Result<String> {
        match prompt.template {
            TemplateId::RoutingB => {
                let a = analyze_text(binding(prompt, "question"));
                Ok(match (a.affect, a.object) {
                    (Some(_), _) => "Yes".to_string(),
                    (None, Some((object, ty))) => format!("{object}, {ty}"),
                    (None, None) => "No".to_string(),
                })
            }
            TemplateId::Extraction => {
                let content = binding(prompt, "content");
                let a = analyze_text(content);
                let (Some((polarity, intensity)), Some((object, ty))) = (a.affect, a.object) else {
                    return Ok(json!({ "error": "no affective statement about a known object" }).to_string());
                };
                let c = mock_confidences(polarity, intensity);
                Ok(json!({
                    "object_id": object,
                    "object_type": ty,
                    "aspect": a.aspect,
                    "sentiment_profile": {
                        "positive_confidence": c.positive,
                        "negative_confidence": c.negative,
                        "neutral_confidence": c.neutral,
                    },
                    "summary": content.trim(),
                    "reason": "",
                    "strength": mock_strength(intensity),
                })
                .to_string())
            }
            TemplateId::Master => {
                let candidates: Vec<CandidateMemory> = serde_json::from_str(binding(prompt, "second_search"))
                    .map_err(|e| Error::Provider(format!("mock master: bad candidates: {e}")))?;
                let incoming: Value = serde_json::from_str(binding(prompt, "user_info"))
                    .map_err(|e| Error::Provider(format!("mock master: bad evidence: {e}")))?;
                let dir: DirInfo = serde_json::from_value(incoming["dir_info"].clone())
                    .map_err(|e| Error::Provider(format!("mock master: bad dir_info: {e}")))?;
                let content = incoming["content"].as_str().unwrap_or_default();
                let strength = incoming["S"].as_f64().unwrap_or(0.0);
                let cat = categorize_by_rules(&candidates, &dir, content, strength);
                Ok(serde_json::to_string(&cat).expect("categorization serializes"))
            }
            TemplateId::Generate => {
                let question = binding(prompt, "question").trim();
                let top = binding(prompt, "user_info").lines().find_map(|l| l.strip_prefix("- ")).map(str::to_string);
                Ok(match top {
                    Some(memory) => format!("I hear you: \"{question}\". I remember {memory}"),
                    None => format!("I hear you: \"{question}\"."),
                })
            }
            TemplateId::RoutingA => Ok(format!("I hear you: \"{}\".", binding(prompt, "question").trim())),
            TemplateId::Summarize => Ok(fold_summary(binding(prompt, "summary"), binding(prompt, "evidence"))),
            TemplateId::Judge => {
                let a = binding(prompt, "response_a");
                let b = binding(prompt, "response_b");
                let scores = |r: &str| {
                    DIMENSIONS
                        .iter()
                        .map(|d| (d.to_string(), json!(judge_score(d, r))))
                        .collect::<serde_json::Map<_, _>>()
                };
                Ok(json!({
                    "evaluation": {
                        "response_a": scores(a),
                        "response_b": scores(b),
                        "rationale": "deterministic mock verdict",
                    }
                })
                .to_string())
            }
        }
    }
}
