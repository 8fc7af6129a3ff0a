//! Prompt templates and rendering.
//!
//! Templates use `{name}` placeholders where `name` is an identifier. Any other
//! brace (JSON examples inside a template) is literal text. The built-in
//! templates are compiled in; a directory of same-named `.txt` files can
//! override any of them at runtime.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TemplateId {
    RoutingA,
    RoutingB,
    Extraction,
    Master,
    Generate,
    Judge,
    Summarize,
}

impl TemplateId {
    pub const ALL: [TemplateId; 7] = [
        TemplateId::RoutingA,
        TemplateId::RoutingB,
        TemplateId::Extraction,
        TemplateId::Master,
        TemplateId::Generate,
        TemplateId::Judge,
        TemplateId::Summarize,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::RoutingA => "routing_a",
            TemplateId::RoutingB => "routing_b",
            TemplateId::Extraction => "extraction",
            TemplateId::Master => "master",
            TemplateId::Generate => "generate",
            TemplateId::Judge => "judge",
            TemplateId::Summarize => "summarize",
        }
    }

    pub fn expected_output(self) -> OutputKind {
        match self {
            TemplateId::RoutingA | TemplateId::Generate | TemplateId::Summarize => OutputKind::FreeText,
            TemplateId::RoutingB => OutputKind::Tokens,
            TemplateId::Extraction | TemplateId::Master | TemplateId::Judge => OutputKind::Json,
        }
    }

    fn builtin(self) -> &'static str {
        match self {
            TemplateId::RoutingA => include_str!("../prompts/routing_a.txt"),
            TemplateId::RoutingB => include_str!("../prompts/routing_b.txt"),
            TemplateId::Extraction => include_str!("../prompts/extraction.txt"),
            TemplateId::Master => include_str!("../prompts/master.txt"),
            TemplateId::Generate => include_str!("../prompts/generate.txt"),
            TemplateId::Judge => include_str!("../prompts/judge.txt"),
            TemplateId::Summarize => include_str!("../prompts/summarize.txt"),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a template's completion is expected to look like.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    FreeText,
    /// "Yes", "No", or "object, type".
    Tokens,
    Json,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub text: String,
    segments: Vec<Segment>,
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl PromptTemplate {
    pub fn parse(id: TemplateId, text: impl Into<String>) -> Self {
        let text = text.into();
        let mut segments = Vec::new();
        let mut literal = String::new();
        let mut rest = text.as_str();
        while let Some(open) = rest.find('{') {
            let after = &rest[open + 1..];
            match after.find('}') {
                Some(close) if is_ident(&after[..close]) => {
                    literal.push_str(&rest[..open]);
                    if !literal.is_empty() {
                        segments.push(Segment::Text(std::mem::take(&mut literal)));
                    }
                    segments.push(Segment::Slot(after[..close].to_string()));
                    rest = &after[close + 1..];
                }
                _ => {
                    literal.push_str(&rest[..=open]);
                    rest = after;
                }
            }
        }
        literal.push_str(rest);
        if !literal.is_empty() {
            segments.push(Segment::Text(literal));
        }
        Self { id, text, segments }
    }

    pub fn placeholders(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .segments
            .iter()
            .filter_map(|s| match s {
                Segment::Slot(name) => Some(name.as_str()),
                Segment::Text(_) => None,
            })
            .collect();
        out.dedup();
        out
    }

    pub fn render(&self, bindings: &Bindings) -> Result<Prompt> {
        let mut text = String::with_capacity(self.text.len());
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => text.push_str(t),
                Segment::Slot(name) => match bindings.get(name) {
                    Some(v) => text.push_str(v),
                    None => {
                        return Err(Error::UnboundPlaceholder { template: self.id.to_string(), name: name.clone() })
                    }
                },
            }
        }
        Ok(Prompt { template: self.id, text, bindings: bindings.clone() })
    }
}

pub type Bindings = BTreeMap<String, String>;

/// Build a [`Bindings`] map from `(name, value)` pairs.
pub fn bindings<I, K, V>(pairs: I) -> Bindings
where
    I: IntoIterator<Item = (K, V)>,
    K: Into<String>,
    V: Into<String>,
{
    pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect()
}

/// A rendered template, ready for a chat provider.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub template: TemplateId,
    pub text: String,
    pub bindings: Bindings,
}

#[derive(Debug, Clone)]
pub struct TemplateRegistry {
    templates: BTreeMap<TemplateId, PromptTemplate>,
}

impl Default for TemplateRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateRegistry {
    pub fn builtin() -> Self {
        let templates = TemplateId::ALL.into_iter().map(|id| (id, PromptTemplate::parse(id, id.builtin()))).collect();
        Self { templates }
    }

    /// Built-ins overridden by `<dir>/<id>.txt` wherever such a file exists.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut reg = Self::builtin();
        for id in TemplateId::ALL {
            let path = dir.join(format!("{}.txt", id.as_str()));
            if path.exists() {
                let text = std::fs::read_to_string(&path)?;
                reg.templates.insert(id, PromptTemplate::parse(id, text));
            }
        }
        Ok(reg)
    }

    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }

    pub fn render(&self, id: TemplateId, bindings: &Bindings) -> Result<Prompt> {
        self.get(id).render(bindings)
    }
}
