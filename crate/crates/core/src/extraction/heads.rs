//! Stage one: head entity recognition over the whole document.

use serde::{Deserialize, Serialize};

use super::llm::LlmClient;
use super::prompt::{inputs, PromptSet};
use super::ExtractionError;
use crate::corpus::{PolicyDocument, Warning};
use crate::ontology::OntologySchema;
use crate::text::{find_all, Span};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadEntityMention {
    pub doc_id: String,
    pub surface: String,
    pub type_code: String,
    /// Every occurrence of `surface` in the body, in order.
    pub occurrences: Vec<Span>,
}

#[derive(Debug, Clone, Default)]
pub struct HeadRecognition {
    pub mentions: Vec<HeadEntityMention>,
    /// Items dropped because the surface is absent or the type unknown.
    pub dropped: usize,
    pub warnings: Vec<Warning>,
}

/// The entity type list offered to the model, one `CODE: name, description`
/// line per type.
pub fn entity_type_listing(schema: &OntologySchema) -> String {
    schema
        .entity_types
        .values()
        .map(|t| format!("{}: {}，{}", t.code, t.display_name, t.description))
        .collect::<Vec<_>>()
        .join("\n")
}

const QUOTES: &[char] = &['"', '\'', '“', '”', '‘', '’', '「', '」', '`'];

fn strip_list_marker(line: &str) -> &str {
    let line = line.trim();
    for bullet in ["- ", "* ", "• ", "·"] {
        if let Some(rest) = line.strip_prefix(bullet) {
            return rest.trim_start();
        }
    }
    // (1) （1） 1. 1、 1) 1）
    let inner = line.strip_prefix('(').or_else(|| line.strip_prefix('（')).unwrap_or(line);
    let digits = inner.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &inner[digits..];
        for sep in ['.', '、', ')', '）', '．'] {
            if let Some(after) = rest.strip_prefix(sep) {
                return after.trim_start();
            }
        }
    }
    line
}

fn split_item(line: &str) -> Option<(String, String)> {
    let line = strip_list_marker(line);
    let (surface, ty) = if let Some(pair) = ["|", "｜", "\t"].iter().find_map(|sep| line.rsplit_once(sep)) {
        pair
    } else if let Some(body) = line.strip_suffix(')').or_else(|| line.strip_suffix('）')) {
        body.rsplit_once('(').or_else(|| body.rsplit_once('（'))?
    } else {
        line.rsplit_once(char::is_whitespace)?
    };
    let surface = surface.trim().trim_matches(QUOTES).trim();
    let ty = ty.trim().trim_matches(QUOTES).trim().to_ascii_uppercase();
    if surface.is_empty() || !crate::ontology::is_identifier(&ty) {
        return None;
    }
    Some((surface.to_string(), ty))
}

/// Lenient parse of a head-entity response into (surface, type) items.
/// Accepts a JSON array of `{surface|text|entity, type}` objects or one item
/// per line with `|`, tab or parenthesized types, tolerating list markers
/// and blank lines. `None` means nothing could be read from a non-empty
/// response; an explicit `NONE` yields an empty list.
pub fn parse_head_response(response: &str) -> Option<Vec<(String, String)>> {
    let trimmed = response.trim();
    if trimmed.is_empty() {
        return None;
    }
    if matches!(trimmed, "NONE" | "无" | "[]") {
        return Some(Vec::new());
    }
    if let Ok(serde_json::Value::Array(items)) = serde_json::from_str::<serde_json::Value>(trimmed) {
        let parsed: Vec<_> = items
            .iter()
            .filter_map(|item| {
                let surface = ["surface", "text", "entity"].iter().find_map(|k| item.get(k)?.as_str())?;
                let ty = item.get("type")?.as_str()?;
                Some((surface.trim().to_string(), ty.trim().to_ascii_uppercase()))
            })
            .filter(|(s, _)| !s.is_empty())
            .collect();
        return (!parsed.is_empty()).then_some(parsed);
    }
    let parsed: Vec<_> = trimmed.lines().filter(|l| !l.trim().is_empty()).filter_map(split_item).collect();
    (!parsed.is_empty()).then_some(parsed)
}

/// Runs the head-entity prompt on the whole body and keeps only items whose
/// surface occurs verbatim in the body and whose type the schema knows.
pub fn recognize_head_entities(
    doc: &PolicyDocument,
    client: &dyn LlmClient,
    schema: &OntologySchema,
    prompts: &PromptSet,
) -> Result<HeadRecognition, ExtractionError> {
    let listing = entity_type_listing(schema);
    let prompt =
        prompts.head_entities.render(inputs([("types", listing.as_str()), ("document", doc.body.as_str())]))?;
    let response = client.complete(&prompt)?;
    let items = parse_head_response(&response).ok_or_else(|| ExtractionError::UnparseableResponse {
        template: prompt.template_id.clone(),
        response: response.clone(),
    })?;

    let mut out = HeadRecognition::default();
    for (surface, type_code) in items {
        if schema.entity_type(&type_code).is_none() {
            out.dropped += 1;
            out.warnings.push(Warning::new(&doc.doc_id, format!("head `{surface}` has unknown type {type_code}")));
            continue;
        }
        let occurrences = find_all(&doc.body, &surface);
        if occurrences.is_empty() {
            out.dropped += 1;
            out.warnings.push(Warning::new(&doc.doc_id, format!("head `{surface}` does not occur in the document")));
            continue;
        }
        if let Some(existing) = out.mentions.iter().find(|m| m.surface == surface) {
            if existing.type_code != type_code {
                out.warnings.push(Warning::new(
                    &doc.doc_id,
                    format!("head `{surface}` typed both {} and {type_code}; keeping the first", existing.type_code),
                ));
            }
            continue;
        }
        out.mentions.push(HeadEntityMention { doc_id: doc.doc_id.clone(), surface, type_code, occurrences });
    }
    out.mentions.sort_by(|a, b| (a.occurrences[0], &a.surface).cmp(&(b.occurrences[0], &b.surface)));
    Ok(out)
}
