use std::fmt;

use serde::{Deserialize, Serialize};

/// Trim, lower-case and collapse internal whitespace.
pub fn canonicalize(s: &str) -> String {
    s.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

/// Identity of a memory unit: `(object_id, aspect)`.
///
/// Ordering is lexicographic on `object_id`, then `aspect`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UnitKey {
    pub object_id: String,
    pub aspect: String,
}

impl UnitKey {
    /// Canonicalized key.
    pub fn new(object_id: &str, aspect: &str) -> Self {
        Self { object_id: canonicalize(object_id), aspect: canonicalize(aspect) }
    }

    /// Key taken verbatim, for units persisted under an older canonical form.
    pub fn raw(object_id: &str, aspect: &str) -> Self {
        Self { object_id: object_id.to_string(), aspect: aspect.to_string() }
    }

    pub fn canonical(&self) -> Self {
        Self::new(&self.object_id, &self.aspect)
    }

    /// Parse the `object_id/aspect` display form. The aspect is everything
    /// after the last slash.
    pub fn parse(s: &str) -> Option<Self> {
        let (object_id, aspect) = s.rsplit_once('/')?;
        Some(Self::raw(object_id, aspect))
    }
}

impl fmt::Display for UnitKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.object_id, self.aspect)
    }
}
