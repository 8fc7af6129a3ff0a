use serde_json::Value;

use crate::belief::{Evidence, SentimentProfile, MAX_STRENGTH};
use crate::error::{Error, Result};
use crate::prompt::{bindings, TemplateId, TemplateRegistry};
use crate::providers::shape::{opt, req};
use crate::providers::{ChatProvider, JsonShape};

pub fn extraction_shape() -> JsonShape {
    JsonShape::object([
        req("object_id", JsonShape::String),
        req("object_type", JsonShape::String),
        req("aspect", JsonShape::String),
        req(
            "sentiment_profile",
            JsonShape::object([
                req("positive_confidence", JsonShape::Number),
                req("negative_confidence", JsonShape::Number),
                req("neutral_confidence", JsonShape::Number),
            ]),
        ),
        req("summary", JsonShape::String),
        opt("reason", JsonShape::String),
        opt("strength", JsonShape::Number),
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extracted {
    pub evidence: Evidence,
    /// Some confidence was outside [0, 1] and was clamped.
    pub clamped: bool,
}

/// Strength implied by a normalized profile when the model gives none: the
/// inverse of the mock mapping, `3 * (2 * p_max - 1)`, clamped.
pub fn strength_from_profile(p: &SentimentProfile) -> f64 {
    (MAX_STRENGTH * (2.0 * p.dominant().1 - 1.0)).clamp(0.0, MAX_STRENGTH)
}

/// Build evidence from a shape-checked extraction document. Any `H` the
/// model volunteers is ignored.
pub fn evidence_from_json(doc: &Value, input: &str) -> Result<Extracted> {
    let text = |k: &str| doc[k].as_str().unwrap_or_default().to_string();
    let sp = &doc["sentiment_profile"];
    let num = |k: &str| sp[k].as_f64().unwrap_or(f64::NAN);
    let raw = SentimentProfile::new(num("positive_confidence"), num("negative_confidence"), num("neutral_confidence"));
    if !raw.to_array().iter().all(|c| c.is_finite()) {
        return Err(Error::InvalidEvidence("non-finite confidence".into()));
    }
    let (confidences, clamped) = raw.clamped();
    let normalized = crate::belief::normalize(&confidences)?;
    let strength = match doc.get("strength").and_then(Value::as_f64) {
        Some(s) if s.is_finite() => s.clamp(0.0, MAX_STRENGTH),
        _ => strength_from_profile(&normalized),
    };
    let object_id = text("object_id");
    let aspect = text("aspect");
    let mut description = text("summary").trim().to_string();
    if description.is_empty() {
        description = input.trim().to_string();
    }
    let evidence = Evidence {
        description,
        query: format!("{object_id} {aspect}"),
        confidences,
        strength,
        object_id,
        object_type: text("object_type"),
        aspect,
        reason: text("reason"),
    }
    .validated()?;
    Ok(Extracted { evidence, clamped })
}

pub fn extract(
    chat: &dyn ChatProvider,
    templates: &TemplateRegistry,
    input: &str,
    messages: &str,
) -> Result<Extracted> {
    let prompt = templates.render(TemplateId::Extraction, &bindings([("content", input), ("messages", messages)]))?;
    let doc = chat.structured(&prompt, &extraction_shape())?;
    evidence_from_json(&doc, input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn doc(p: f64, n: f64, u: f64) -> Value {
        json!({
            "object_id": "Coffee", "object_type": "Beverage", "aspect": "Taste",
            "sentiment_profile": {"positive_confidence": p, "negative_confidence": n, "neutral_confidence": u},
            "summary": "likes coffee", "reason": "", "H": 0.0
        })
    }

    #[test]
    fn clamps_and_flags() {
        let x = evidence_from_json(&doc(1.2, -0.1, 0.0), "").unwrap();
        assert!(x.clamped);
        assert_eq!(x.evidence.confidences, SentimentProfile::new(1.0, 0.0, 0.0));
        assert_eq!(x.evidence.object_id, "coffee");
        assert_eq!(x.evidence.strength, 3.0);
        let x = evidence_from_json(&doc(0.5, 0.25, 0.25), "").unwrap();
        assert!(!x.clamped);
        assert_eq!(x.evidence.strength, 0.0);
    }

    #[test]
    fn missing_aspect_fails_shape() {
        let mut d = doc(1.0, 0.0, 0.0);
        d.as_object_mut().unwrap().remove("aspect");
        assert!(extraction_shape().check(&d).is_err());
    }
}
