//! Seeded synthetic observation streams.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::Polarity;
use crate::providers::Observation;

const OBJECTS: &[(&str, &str)] = &[
    ("coffee", "beverage"),
    ("green tea", "beverage"),
    ("orange juice", "beverage"),
    ("red wine", "beverage"),
    ("pizza", "food"),
    ("sushi", "food"),
    ("dark chocolate", "food"),
    ("ramen", "food"),
    ("lamb soup", "food"),
    ("smartphone", "product"),
    ("laptop", "product"),
    ("headphones", "product"),
    ("camera", "product"),
    ("espresso machine", "appliance"),
    ("air fryer", "appliance"),
    ("running shoes", "clothing"),
    ("wool sweater", "clothing"),
    ("corner cafe", "place"),
    ("city park", "place"),
    ("gym", "place"),
    ("sci-fi movie", "movie"),
    ("mystery novel", "book"),
    ("jazz", "music"),
    ("hiking", "activity"),
    ("swimming", "activity"),
    ("yoga", "activity"),
    ("electric car", "vehicle"),
    ("commute", "routine"),
    ("manager", "person"),
    ("neighbor", "person"),
];

const ASPECTS: &[&str] = &["quality", "price", "taste", "service", "design", "experience"];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub object_id: String,
    pub object_type: String,
    pub aspect: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub seed: u64,
    pub turns: usize,
    pub vocab: usize,
    /// Probability an observation contradicts the triple's ground polarity.
    pub noise: f64,
    /// Intensities are uniform on `[lo, hi]`.
    pub intensity: (f64, f64),
}

impl StreamSpec {
    pub fn new(seed: u64, turns: usize, vocab: usize) -> Self {
        Self { seed, turns, vocab, noise: 0.1, intensity: (0.0, 1.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationStream {
    pub spec: StreamSpec,
    pub vocabulary: Vec<Triple>,
    pub ground: Vec<Polarity>,
    pub observations: Vec<Observation>,
}

/// `m` distinct triples. The first `30 * 6` come from a fixed pool of
/// objects and aspects; beyond that numbered objects are added.
fn vocabulary(rng: &mut ChaCha8Rng, m: usize) -> Vec<Triple> {
    let mut all: Vec<Triple> = Vec::new();
    let mut k = 0;
    while all.len() < m.max(OBJECTS.len() * ASPECTS.len()) {
        let extra = k / OBJECTS.len();
        let (name, ty) = OBJECTS[k % OBJECTS.len()];
        let object_id = if extra == 0 { name.to_string() } else { format!("{name} {extra}") };
        for aspect in ASPECTS {
            all.push(Triple { object_id: object_id.clone(), object_type: ty.into(), aspect: (*aspect).into() });
        }
        k += 1;
    }
    all.shuffle(rng);
    all.truncate(m);
    all
}

/// Sentence for an observation, phrased by polarity and intensity band.
pub fn render_text(triple: &Triple, polarity: Polarity, intensity: f64) -> String {
    let phrase = match polarity {
        Polarity::Positive if intensity > 0.8 => "absolutely love",
        Polarity::Positive if intensity > 0.5 => "really like",
        Polarity::Positive if intensity > 0.2 => "like",
        Polarity::Positive => "slightly like",
        Polarity::Negative if intensity > 0.8 => "absolutely hate",
        Polarity::Negative if intensity > 0.5 => "really dislike",
        Polarity::Negative if intensity > 0.2 => "dislike",
        Polarity::Negative => "slightly dislike",
        Polarity::Neutral if intensity > 0.5 => "feel quite indifferent about",
        Polarity::Neutral => "have no strong feelings about",
    };
    format!("I {phrase} the {} of the {}.", triple.aspect, triple.object_id)
}

pub fn generate(spec: &StreamSpec) -> ObservationStream {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let vocab = vocabulary(&mut rng, spec.vocab);
    let ground: Vec<Polarity> = vocab.iter().map(|_| Polarity::ALL[rng.gen_range(0..3)]).collect();
    let (lo, hi) = spec.intensity;
    let mut observations = Vec::with_capacity(spec.turns);
    if !vocab.is_empty() {
        for _ in 0..spec.turns {
            let i = rng.gen_range(0..vocab.len());
            let polarity = if rng.gen_bool(spec.noise.clamp(0.0, 1.0)) {
                let others: Vec<Polarity> = Polarity::ALL.into_iter().filter(|p| *p != ground[i]).collect();
                others[rng.gen_range(0..2)]
            } else {
                ground[i]
            };
            let intensity = lo + (hi - lo) * rng.gen::<f64>();
            let t = &vocab[i];
            observations.push(Observation {
                object_id: t.object_id.clone(),
                object_type: t.object_type.clone(),
                aspect: t.aspect.clone(),
                polarity,
                intensity,
                text: render_text(t, polarity, intensity),
            });
        }
    }
    ObservationStream { spec: spec.clone(), vocabulary: vocab, ground, observations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn reproducible_and_distinct() {
        let spec = StreamSpec::new(7, 200, 140);
        let a = generate(&spec);
        assert_eq!(a, generate(&spec));
        assert_eq!(a.observations.len(), 200);
        let keys: BTreeSet<_> = a.vocabulary.iter().map(|t| (&t.object_id, &t.aspect)).collect();
        assert_eq!(keys.len(), 140);
        assert_ne!(a.observations, generate(&StreamSpec::new(8, 200, 140)).observations);
    }

    #[test]
    fn large_vocabularies_stay_distinct() {
        let s = generate(&StreamSpec::new(1, 10, 400));
        let keys: BTreeSet<_> = s.vocabulary.iter().map(|t| (&t.object_id, &t.aspect)).collect();
        assert_eq!(keys.len(), 400);
    }

    #[test]
    fn empty_stream() {
        assert!(generate(&StreamSpec::new(1, 0, 140)).observations.is_empty());
    }
}
