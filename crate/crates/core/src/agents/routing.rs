use serde::{Deserialize, Serialize};

use crate::prompt::{bindings, TemplateId, TemplateRegistry};
use crate::providers::ChatProvider;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RouteKind {
    Store,
    Retrieve,
    Generate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub kind: RouteKind,
    /// `(object, type)` from the non-affective branch.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hint: Option<(String, String)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl RoutingDecision {
    pub fn store() -> Self {
        Self { kind: RouteKind::Store, hint: None, warning: None }
    }

    pub fn generate() -> Self {
        Self { kind: RouteKind::Generate, hint: None, warning: None }
    }

    pub fn retrieve(object: &str, object_type: &str) -> Self {
        Self { kind: RouteKind::Retrieve, hint: Some((object.to_string(), object_type.to_string())), warning: None }
    }
}

/// Read a routing reply: "Yes", "No" or "object, type". Anything else is
/// `None`.
pub fn parse_routing(reply: &str) -> Option<RoutingDecision> {
    let t = reply.trim().trim_matches(|c: char| c == '"' || c == '\'' || c == '`').trim_end_matches('.').trim();
    if t.eq_ignore_ascii_case("yes") {
        return Some(RoutingDecision::store());
    }
    if t.eq_ignore_ascii_case("no") {
        return Some(RoutingDecision::generate());
    }
    let (object, ty) = t.split_once(',')?;
    let (object, ty) = (object.trim(), ty.trim());
    let plausible = |s: &str| !s.is_empty() && s.len() <= 64 && !s.contains(['\n', ',']);
    (plausible(object) && plausible(ty)).then(|| RoutingDecision::retrieve(object, ty))
}

/// Decide how to handle one user turn. Malformed replies get one retry;
/// after that, and on any provider error, the turn falls back to Generate.
pub fn route(chat: &dyn ChatProvider, templates: &TemplateRegistry, input: &str, messages: &str) -> RoutingDecision {
    let prompt = match templates.render(TemplateId::RoutingB, &bindings([("question", input), ("messages", messages)]))
    {
        Ok(p) => p,
        Err(e) => return fallback(e.to_string()),
    };
    let mut last = String::new();
    for _ in 0..2 {
        match chat.complete(&prompt) {
            Ok(reply) => match parse_routing(&reply) {
                Some(d) => return d,
                None => last = format!("unparseable routing reply {:?}", reply.trim()),
            },
            Err(e) => return fallback(format!("routing failed: {e}")),
        }
    }
    fallback(last)
}

fn fallback(warning: String) -> RoutingDecision {
    RoutingDecision { warning: Some(warning), ..RoutingDecision::generate() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_three_forms() {
        assert_eq!(parse_routing("Yes").unwrap().kind, RouteKind::Store);
        assert_eq!(parse_routing(" no.\n").unwrap().kind, RouteKind::Generate);
        let d = parse_routing("\"coffee, beverage\"").unwrap();
        assert_eq!(d.hint, Some(("coffee".into(), "beverage".into())));
        assert_eq!(parse_routing("I think the user is happy"), None);
        assert_eq!(parse_routing("a, b, c"), None);
    }
}
