use crate::error::Result;
use crate::prompt::{bindings, TemplateId, TemplateRegistry};
use crate::providers::ChatProvider;
use crate::retrieval::Hit;
use crate::store::MemoryStore;

pub const APOLOGY: &str = "Sorry, I lost my train of thought for a moment. Could you say that again?";

/// One line per retrieved memory, best first: key, type, summary and the
/// numbers behind it.
pub fn format_user_info(store: &MemoryStore, hits: &[Hit]) -> String {
    hits.iter()
        .filter_map(|h| store.get(&h.key).map(|u| (h, u)))
        .map(|(h, u)| {
            let p = u.profile();
            format!(
                "- {} ({}): {} [pos {:.2}, neg {:.2}, neu {:.2}, H {:.3}, W {:.2}, sim {:.3}]",
                h.key,
                u.object_type,
                u.summary,
                p.positive,
                p.negative,
                p.neutral,
                u.entropy(),
                u.weight,
                h.score
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Reply text for a turn. With memories the response prompt carries them as
/// user information; without, the plain companion prompt is used. Provider
/// failures and empty replies become [`APOLOGY`].
pub fn generate_response(
    chat: &dyn ChatProvider,
    templates: &TemplateRegistry,
    input: &str,
    messages: &str,
    user_info: &str,
) -> (String, Option<String>) {
    match try_generate(chat, templates, input, messages, user_info) {
        Ok(text) if !text.trim().is_empty() => (text.trim().to_string(), None),
        Ok(_) => (APOLOGY.to_string(), Some("empty response".into())),
        Err(e) => (APOLOGY.to_string(), Some(format!("generation failed: {e}"))),
    }
}

fn try_generate(
    chat: &dyn ChatProvider,
    templates: &TemplateRegistry,
    input: &str,
    messages: &str,
    user_info: &str,
) -> Result<String> {
    let prompt = if user_info.is_empty() {
        templates.render(TemplateId::RoutingA, &bindings([("question", input), ("messages", messages)]))?
    } else {
        templates.render(
            TemplateId::Generate,
            &bindings([("question", input), ("messages", messages), ("user_info", user_info)]),
        )?
    };
    chat.complete(&prompt)
}
