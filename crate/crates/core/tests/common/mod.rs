//! Reference implementations the integration suites compare against. Each
//! one is written from the definitions, sharing no code with the crate.
#![allow(dead_code)]

use std::cmp::Ordering;

use dam_core::belief::{MemoryUnit, SentimentProfile};
use dam_core::providers::MockEmbedder;
use dam_core::{canonicalize, MemoryStore, UnitKey};
use rand::seq::SliceRandom;
use rand::Rng;

/// Shannon entropy in bits via natural logs.
pub fn entropy_oracle(p: [f64; 3]) -> f64 {
    let total: f64 = p.iter().sum();
    let mut h = 0.0;
    for x in p {
        let q = x / total;
        if q > 0.0 {
            h -= q * q.ln();
        }
    }
    h / std::f64::consts::LN_2
}

/// Batch form of repeated weighted averaging: `(sum S_i P_i) / (sum S_i)`
/// starting from `(c0, w0)`.
pub fn batch_oracle(c0: [f64; 3], w0: f64, evidence: &[([f64; 3], f64)]) -> ([f64; 3], f64) {
    let mut num = [c0[0] * w0, c0[1] * w0, c0[2] * w0];
    let mut den = w0;
    for (p, s) in evidence {
        for k in 0..3 {
            num[k] += p[k] * s;
        }
        den += s;
    }
    ([num[0] / den, num[1] / den, num[2] / den], den)
}

pub fn random_simplex<R: Rng>(rng: &mut R) -> [f64; 3] {
    loop {
        let a: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
        let t: f64 = a.iter().sum();
        if t > 1e-6 {
            return a.map(|x| x / t);
        }
    }
}

pub fn dot_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Scan every unit, keep metadata matches, sort by score desc, updated_at
/// desc, key asc, keep `k`.
pub fn brute_force_retrieve(
    store: &MemoryStore,
    object_type: Option<&str>,
    aspect: Option<&str>,
    query: &[f64],
    k: usize,
) -> Vec<(UnitKey, f64)> {
    let mut scored: Vec<(UnitKey, f64, u64)> = store
        .iter()
        .filter(|(_, u, _)| object_type.is_none_or(|t| canonicalize(&u.object_type) == canonicalize(t)))
        .filter(|(_, u, _)| aspect.is_none_or(|a| canonicalize(&u.aspect) == canonicalize(a)))
        .map(|(key, u, e)| (key.clone(), dot_cosine(query, e), u.updated_at))
        .collect();
    scored.sort_by(|a, b| match b.1.partial_cmp(&a.1).unwrap() {
        Ordering::Equal => b.2.cmp(&a.2).then_with(|| a.0.cmp(&b.0)),
        o => o,
    });
    scored.into_iter().take(k).map(|(key, s, _)| (key, s)).collect()
}

pub const OBJECT_TYPES: [&str; 4] = ["beverage", "appliance", "person", "place"];
pub const ASPECTS: [&str; 5] = ["taste", "price", "service", "design", "quality"];
pub const WORDS: [&str; 16] = [
    "coffee", "tea", "bitter", "sweet", "cheap", "loud", "quiet", "friendly", "rude", "warm", "cold", "fresh", "stale",
    "bright", "heavy", "smooth",
];

pub fn random_summary<R: Rng>(rng: &mut R) -> String {
    let n = rng.gen_range(1..6);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// A store of `n` units with mock embeddings of random summaries. Types and
/// aspects are drawn from small pools so filters have several matches;
/// timestamps collide on purpose to exercise tie-breaking.
pub fn random_store<R: Rng>(rng: &mut R, n: usize, dim: usize) -> MemoryStore {
    let mut store = MemoryStore::new(dim, "random");
    for i in 0..n {
        let summary = random_summary(rng);
        let ty = OBJECT_TYPES.choose(rng).unwrap();
        let aspect = ASPECTS.choose(rng).unwrap();
        let mut unit = MemoryUnit::new(
            &format!("object {i}"),
            ty,
            aspect,
            SentimentProfile::from_array(random_simplex(rng)),
            rng.gen_range(0.0..30.0),
            &summary,
            rng.gen_range(0..50),
        )
        .unwrap();
        unit.updated_at = unit.created_at + rng.gen_range(0..5);
        unit.high_entropy_streak = rng.gen_range(0..4);
        unit.reason = if rng.gen_bool(0.3) { random_summary(rng) } else { String::new() };
        let emb = dam_core::providers::mock_embed(&summary, dim);
        store.put(unit, emb).unwrap();
    }
    store
}

pub fn mock_embedder(dim: usize) -> MockEmbedder {
    MockEmbedder::new(dim)
}

/// Deterministic 50-turn script for end-to-end chat runs: greetings,
/// affective statements about several objects, and queries about them.
pub fn chat_script() -> Vec<String> {
    let statements = [
        "I love this espresso machine",
        "I really love the taste of coffee",
        "The coffee packaging is terrible",
        "I hate how loud the blender is",
        "My manager is really friendly",
        "The price of this coffee is awful",
        "I adore the design of my new phone",
        "The service at the cafe was disappointing",
        "I like the taste of green tea",
        "The espresso machine is too noisy, I hate it",
    ];
    let queries = [
        "What do I think about coffee?",
        "How do I feel about the espresso machine?",
        "Do you remember what I said about my manager?",
        "What did I say about tea?",
    ];
    let chatter = ["Hello!", "Thanks, that's all for now.", "Good morning"];
    (0..50)
        .map(|i| match i % 5 {
            0 | 2 | 3 => statements[(i * 7 / 5) % statements.len()].to_string(),
            1 => queries[i % queries.len()].to_string(),
            _ => chatter[i % chatter.len()].to_string(),
        })
        .collect()
}
