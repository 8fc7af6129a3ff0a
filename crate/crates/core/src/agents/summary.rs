//! Summary maintenance.

use crate::belief::MemoryUnit;
use crate::error::Result;
use crate::prompt::{bindings, TemplateId, TemplateRegistry};
use crate::providers::ChatProvider;

pub const MAX_SUMMARY_CHARS: usize = 512;
const SEP: &str = "; ";

/// Deterministic summary rule: the newest description first, earlier
/// segments after it, exact repeats removed, oldest segments dropped to stay
/// within [`MAX_SUMMARY_CHARS`].
pub fn fold_summary(summary: &str, new: &str) -> String {
    let new = new.trim();
    let mut segments: Vec<&str> = Vec::new();
    if !new.is_empty() {
        segments.push(new);
    }
    for seg in summary.split(SEP).map(str::trim) {
        if !seg.is_empty() && !segments.contains(&seg) {
            segments.push(seg);
        }
    }
    while segments.len() > 1 && joined_len(&segments) > MAX_SUMMARY_CHARS {
        segments.pop();
    }
    let out = segments.join(SEP);
    match out.char_indices().nth(MAX_SUMMARY_CHARS) {
        Some((cut, _)) => out[..cut].to_string(),
        None => out,
    }
}

fn joined_len(segments: &[&str]) -> usize {
    segments.iter().map(|s| s.chars().count()).sum::<usize>() + SEP.len() * (segments.len() - 1)
}

/// New summary text for `unit` after absorbing `description`. Mock providers
/// answer with [`fold_summary`]; live ones rewrite the note.
pub fn refresh_summary(
    chat: &dyn ChatProvider,
    templates: &TemplateRegistry,
    unit: &MemoryUnit,
    description: &str,
) -> Result<String> {
    let p = unit.profile();
    let prompt = templates.render(
        TemplateId::Summarize,
        &bindings([
            ("summary", unit.summary.clone()),
            ("evidence", description.to_string()),
            ("p_pos", format!("{:.3}", p.positive)),
            ("p_neg", format!("{:.3}", p.negative)),
            ("p_neu", format!("{:.3}", p.neutral)),
        ]),
    )?;
    let text = chat.complete(&prompt)?;
    let text = text.trim();
    Ok(match text.char_indices().nth(MAX_SUMMARY_CHARS) {
        Some((cut, _)) => text[..cut].to_string(),
        None => text.to_string(),
    })
}

/// Summary of a merged unit from its constituents, most recently updated
/// first.
pub fn merge_summaries(units: &[&MemoryUnit]) -> String {
    let mut ordered: Vec<&MemoryUnit> = units.to_vec();
    ordered.sort_by(|a, b| a.updated_at.cmp(&b.updated_at).then_with(|| a.key().cmp(&b.key())));
    ordered.iter().fold(String::new(), |acc, u| fold_summary(&acc, &u.summary))
}
