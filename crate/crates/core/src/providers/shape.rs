//! Minimal structural checks for JSON returned by chat models.

use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub enum JsonShape {
    Any,
    String,
    Number,
    Bool,
    Array(Box<JsonShape>),
    Object(Vec<Field>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub name: &'static str,
    pub shape: JsonShape,
    pub required: bool,
}

impl JsonShape {
    pub fn object<I: IntoIterator<Item = Field>>(fields: I) -> Self {
        JsonShape::Object(fields.into_iter().collect())
    }

    pub fn array(item: JsonShape) -> Self {
        JsonShape::Array(Box::new(item))
    }

    /// Check `value` against this shape; the error names the first offending path.
    pub fn check(&self, value: &Value) -> Result<(), String> {
        self.check_at(value, "$")
    }

    fn check_at(&self, value: &Value, path: &str) -> Result<(), String> {
        match (self, value) {
            (JsonShape::Any, _) => Ok(()),
            (JsonShape::String, Value::String(_)) => Ok(()),
            (JsonShape::Number, Value::Number(_)) => Ok(()),
            (JsonShape::Bool, Value::Bool(_)) => Ok(()),
            (JsonShape::Array(item), Value::Array(items)) => {
                items.iter().enumerate().try_for_each(|(i, v)| item.check_at(v, &format!("{path}[{i}]")))
            }
            (JsonShape::Object(fields), Value::Object(map)) => {
                for f in fields {
                    let sub = format!("{path}.{}", f.name);
                    match map.get(f.name) {
                        Some(Value::Null) | None if f.required => return Err(format!("{sub} is missing")),
                        Some(Value::Null) | None => {}
                        Some(v) => f.shape.check_at(v, &sub)?,
                    }
                }
                Ok(())
            }
            (expected, got) => Err(format!("{path}: expected {}, got {}", expected.name(), kind(got))),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            JsonShape::Any => "any",
            JsonShape::String => "string",
            JsonShape::Number => "number",
            JsonShape::Bool => "bool",
            JsonShape::Array(_) => "array",
            JsonShape::Object(_) => "object",
        }
    }
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "bool",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

pub fn req(name: &'static str, shape: JsonShape) -> Field {
    Field { name, shape, required: true }
}

pub fn opt(name: &'static str, shape: JsonShape) -> Field {
    Field { name, shape, required: false }
}

/// Pull the JSON document out of a model reply: accepts bare JSON, fenced
/// code blocks, or an object embedded in surrounding prose.
pub fn extract_json(text: &str) -> Option<Value> {
    let trimmed = text.trim();
    if let Ok(v) = serde_json::from_str(trimmed) {
        return Some(v);
    }
    if let Some(start) = trimmed.find("```") {
        let body = &trimmed[start + 3..];
        let body = body.strip_prefix("json").unwrap_or(body);
        if let Some(end) = body.find("```") {
            if let Ok(v) = serde_json::from_str(body[..end].trim()) {
                return Some(v);
            }
        }
    }
    let open = trimmed.find('{')?;
    let close = trimmed.rfind('}')?;
    if close <= open {
        return None;
    }
    serde_json::from_str(&trimmed[open..=close]).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn shape() -> JsonShape {
        JsonShape::object([
            req("name", JsonShape::String),
            req("scores", JsonShape::array(JsonShape::Number)),
            opt("note", JsonShape::String),
        ])
    }

    #[test]
    fn accepts_matching_documents() {
        shape().check(&json!({"name": "x", "scores": [1, 2.5]})).unwrap();
        shape().check(&json!({"name": "x", "scores": [], "note": null, "extra": true})).unwrap();
    }

    #[test]
    fn names_the_offending_path() {
        let err = shape().check(&json!({"name": "x"})).unwrap_err();
        assert!(err.contains("$.scores"), "{err}");
        let err = shape().check(&json!({"name": "x", "scores": [1, "two"]})).unwrap_err();
        assert!(err.contains("$.scores[1]"), "{err}");
        assert!(shape().check(&json!("prose")).is_err());
    }

    #[test]
    fn extracts_json_from_replies() {
        assert_eq!(extract_json("{\"a\":1}"), Some(json!({"a": 1})));
        assert_eq!(extract_json("Sure!\n```json\n{\"a\":1}\n```"), Some(json!({"a": 1})));
        assert_eq!(extract_json("Result: {\"a\": {\"b\": 2}} done"), Some(json!({"a": {"b": 2}})));
        assert_eq!(extract_json("I think the user likes coffee."), None);
    }
}
