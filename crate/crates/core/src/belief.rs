//! Sentiment profiles, belief entropy and the weighted evidence update.
//!
//! Everything here is pure arithmetic over small value types. A stored profile
//! is always normalized; the entropy cached on a [`MemoryUnit`] is derived from
//! its profile and recomputed on every mutation.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::key::{canonicalize, UnitKey};

/// Absolute tolerance for confidence comparisons.
pub const EPS: f64 = 1e-9;

/// Maximum belief entropy over three polarities, `log2(3)`.
pub const MAX_ENTROPY: f64 = 1.584_962_500_721_156;

/// Upper bound of evidence strength.
pub const MAX_STRENGTH: f64 = 3.0;

/// Milliseconds since the Unix epoch (or logical ticks under a logical clock).
pub type Timestamp = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Positive, Polarity::Negative, Polarity::Neutral];

    pub fn index(self) -> usize {
        match self {
            Polarity::Positive => 0,
            Polarity::Negative => 1,
            Polarity::Neutral => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
        }
    }
}

impl std::str::FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" | "pos" => Ok(Polarity::Positive),
            "negative" | "neg" => Ok(Polarity::Negative),
            "neutral" | "neu" => Ok(Polarity::Neutral),
            _ => Err(Error::UnknownPolarity(s.to_string())),
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Confidence in each of the three polarities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentimentProfile {
    pub positive: f64,
    pub negative: f64,
    pub neutral: f64,
}

impl SentimentProfile {
    pub const fn new(positive: f64, negative: f64, neutral: f64) -> Self {
        Self { positive, negative, neutral }
    }

    pub fn uniform() -> Self {
        Self::new(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)
    }

    /// A profile with all mass on one polarity.
    pub fn point(polarity: Polarity) -> Self {
        let mut c = [0.0; 3];
        c[polarity.index()] = 1.0;
        Self::from_array(c)
    }

    pub fn from_array(c: [f64; 3]) -> Self {
        Self::new(c[0], c[1], c[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.positive, self.negative, self.neutral]
    }

    pub fn get(&self, polarity: Polarity) -> f64 {
        self.to_array()[polarity.index()]
    }

    pub fn mass(&self) -> f64 {
        self.positive + self.negative + self.neutral
    }

    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite() && *c >= 0.0)
    }

    pub fn is_normalized(&self) -> bool {
        self.is_valid() && (self.mass() - 1.0).abs() <= EPS
    }

    /// The polarity with the largest confidence; ties resolve in
    /// positive, negative, neutral order.
    pub fn dominant(&self) -> (Polarity, f64) {
        let mut best = (Polarity::Positive, self.positive);
        for p in [Polarity::Negative, Polarity::Neutral] {
            let v = self.get(p);
            if v > best.1 {
                best = (p, v);
            }
        }
        best
    }

    /// Each component clamped into `[0, 1]`; NaN maps to 0. Returns whether
    /// anything changed.
    pub fn clamped(&self) -> (SentimentProfile, bool) {
        let mut changed = false;
        let c = self.to_array().map(|v| {
            let clamped = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
            if clamped != v {
                changed = true;
            }
            clamped
        });
        (Self::from_array(c), changed)
    }

    pub fn l1_distance(&self, other: &SentimentProfile) -> f64 {
        self.to_array().iter().zip(other.to_array()).map(|(a, b)| (a - b).abs()).sum()
    }
}

/// Scale a profile so its components sum to one.
pub fn normalize(p: &SentimentProfile) -> Result<SentimentProfile> {
    if !p.is_valid() {
        return Err(Error::InvalidProfile);
    }
    let mass = p.mass();
    if mass <= 0.0 {
        return Err(Error::ZeroMassProfile);
    }
    Ok(SentimentProfile::from_array(p.to_array().map(|c| c / mass)))
}

/// Shannon entropy (base 2) of the normalized profile, with `0 log 0 = 0`.
pub fn belief_entropy(p: &SentimentProfile) -> Result<f64> {
    let p = normalize(p)?;
    let h: f64 = p.to_array().iter().filter(|&&pk| pk > 0.0).map(|&pk| -pk * pk.log2()).sum();
    // rounding can push a point mass a hair below zero, and an empty sum is -0.0
    Ok(if h > 0.0 { h.min(MAX_ENTROPY) } else { 0.0 })
}

/// Strength-weighted average of a stored profile and an evidence profile.
///
/// `prior` carries `prior_weight` units of accumulated evidence; `evidence`
/// arrives with `strength`. The posterior is
/// `(prior * W + evidence * S) / (W + S)` and the new weight is `W + S`.
pub fn bayes_update(
    prior: &SentimentProfile,
    prior_weight: f64,
    evidence: &SentimentProfile,
    strength: f64,
) -> Result<(SentimentProfile, f64)> {
    if !prior.is_valid() || !evidence.is_valid() {
        return Err(Error::InvalidProfile);
    }
    if !(prior_weight.is_finite() && prior_weight >= 0.0 && strength.is_finite() && strength >= 0.0) {
        return Err(Error::DegenerateUpdate);
    }
    let total = prior_weight + strength;
    if total <= 0.0 {
        return Err(Error::DegenerateUpdate);
    }
    if strength == 0.0 {
        return Ok((*prior, prior_weight));
    }
    let a = prior.to_array();
    let b = evidence.to_array();
    let post = [0, 1, 2].map(|k| (a[k] * prior_weight + b[k] * strength) / total);
    Ok((SentimentProfile::from_array(post), total))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EntropyBand {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyBands {
    pub low: f64,
    pub high: f64,
}

impl Default for EntropyBands {
    fn default() -> Self {
        Self { low: 0.8, high: 1.4 }
    }
}

pub fn classify_entropy(h: f64, bands: &EntropyBands) -> EntropyBand {
    if h < bands.low {
        EntropyBand::Low
    } else if h > bands.high {
        EntropyBand::High
    } else {
        EntropyBand::Medium
    }
}

/// One extracted observation: description `E`, query `Q`, confidences `C`
/// and strength `S`, plus the metadata it is about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub description: String,
    pub query: String,
    pub confidences: SentimentProfile,
    pub strength: f64,
    pub object_id: String,
    pub object_type: String,
    pub aspect: String,
    #[serde(default)]
    pub reason: String,
}

impl Evidence {
    /// Canonicalize metadata, normalize confidences and range-check strength.
    pub fn validated(mut self) -> Result<Evidence> {
        self.object_id = canonicalize(&self.object_id);
        self.object_type = canonicalize(&self.object_type);
        self.aspect = canonicalize(&self.aspect);
        for (name, v) in [("object_id", &self.object_id), ("object_type", &self.object_type), ("aspect", &self.aspect)]
        {
            if v.is_empty() {
                return Err(Error::InvalidEvidence(format!("{name} is empty")));
            }
        }
        if self.confidences.to_array().iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidEvidence("confidence outside [0, 1]".to_string()));
        }
        self.confidences = normalize(&self.confidences)?;
        if !(0.0..=MAX_STRENGTH).contains(&self.strength) {
            return Err(Error::InvalidEvidence(format!("strength {} outside [0, {MAX_STRENGTH}]", self.strength)));
        }
        Ok(self)
    }

    pub fn key(&self) -> UnitKey {
        UnitKey::new(&self.object_id, &self.aspect)
    }

    pub fn entropy(&self) -> Result<f64> {
        belief_entropy(&self.confidences)
    }
}

/// A single (object, aspect) belief.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryUnit {
    pub object_id: String,
    pub object_type: String,
    pub aspect: String,
    profile: SentimentProfile,
    pub weight: f64,
    entropy: f64,
    pub summary: String,
    #[serde(default)]
    pub reason: String,
    pub created_at: Timestamp,
    pub updated_at: Timestamp,
    #[serde(default)]
    pub high_entropy_streak: u32,
}

impl MemoryUnit {
    /// A fresh unit seeded from one piece of evidence: the description becomes
    /// the summary and the strength becomes the weight.
    pub fn from_evidence(ev: &Evidence, now: Timestamp) -> Result<MemoryUnit> {
        let profile = normalize(&ev.confidences)?;
        Ok(MemoryUnit {
            object_id: ev.object_id.clone(),
            object_type: ev.object_type.clone(),
            aspect: ev.aspect.clone(),
            entropy: belief_entropy(&profile)?,
            profile,
            weight: ev.strength,
            summary: ev.description.clone(),
            reason: ev.reason.clone(),
            created_at: now,
            updated_at: now,
            high_entropy_streak: 0,
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn new(
        object_id: &str,
        object_type: &str,
        aspect: &str,
        profile: SentimentProfile,
        weight: f64,
        summary: &str,
        now: Timestamp,
    ) -> Result<MemoryUnit> {
        let profile = normalize(&profile)?;
        Ok(MemoryUnit {
            object_id: object_id.to_string(),
            object_type: object_type.to_string(),
            aspect: aspect.to_string(),
            entropy: belief_entropy(&profile)?,
            profile,
            weight,
            summary: summary.to_string(),
            reason: String::new(),
            created_at: now,
            updated_at: now,
            high_entropy_streak: 0,
        })
    }

    /// Rebuild a unit from persisted fields without recomputing anything.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        object_id: String,
        object_type: String,
        aspect: String,
        profile: SentimentProfile,
        weight: f64,
        entropy: f64,
        summary: String,
        reason: String,
        created_at: Timestamp,
        updated_at: Timestamp,
        high_entropy_streak: u32,
    ) -> MemoryUnit {
        MemoryUnit {
            object_id,
            object_type,
            aspect,
            profile,
            weight,
            entropy,
            summary,
            reason,
            created_at,
            updated_at,
            high_entropy_streak,
        }
    }

    pub fn key(&self) -> UnitKey {
        UnitKey::raw(&self.object_id, &self.aspect)
    }

    pub fn canonical_key(&self) -> UnitKey {
        UnitKey::new(&self.object_id, &self.aspect)
    }

    pub fn profile(&self) -> SentimentProfile {
        self.profile
    }

    pub fn entropy(&self) -> f64 {
        self.entropy
    }

    pub fn set_profile(&mut self, profile: SentimentProfile) -> Result<()> {
        let profile = normalize(&profile)?;
        self.entropy = belief_entropy(&profile)?;
        self.profile = profile;
        Ok(())
    }

    /// Fold one piece of evidence into this unit.
    pub fn absorb(&mut self, confidences: &SentimentProfile, strength: f64, now: Timestamp) -> Result<()> {
        let (posterior, weight) = bayes_update(&self.profile, self.weight, confidences, strength)?;
        self.set_profile(posterior)?;
        self.weight = weight;
        self.updated_at = self.updated_at.max(now);
        Ok(())
    }

    pub fn band(&self, bands: &EntropyBands) -> EntropyBand {
        classify_entropy(self.entropy, bands)
    }
}
