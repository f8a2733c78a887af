//! Versioned prompt templates.
//!
//! Template files live in `prompts/` with a small header:
//!
//! ```text
//! id: relation_word
//! version: 1
//! ---
//! 句子：{segment}
//! ```
//!
//! A prompt's digest covers the template id, its version and the named
//! inputs, not the rendered text, so editing wording without bumping the
//! version keeps recorded transcripts addressable.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template header malformed: {0}")]
    Header(String),
    #[error("template `{template}` needs input `{name}`")]
    MissingInput { template: String, name: String },
    #[error("template `{template}` has no slot for input `{name}`")]
    UnusedInput { template: String, name: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: String,
    pub version: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub template_id: String,
    pub template_version: String,
    pub inputs: BTreeMap<String, String>,
    pub text: String,
    pub digest: String,
}

impl PromptTemplate {
    pub fn parse(source: &str) -> Result<Self, TemplateError> {
        let (header, body) =
            source.split_once("\n---\n").ok_or_else(|| TemplateError::Header("missing `---` separator".into()))?;
        let mut id = None;
        let mut version = None;
        for line in header.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) =
                line.split_once(':').ok_or_else(|| TemplateError::Header(format!("bad header line `{line}`")))?;
            match k.trim() {
                "id" => id = Some(v.trim().to_string()),
                "version" => version = Some(v.trim().to_string()),
                other => return Err(TemplateError::Header(format!("unknown key `{other}`"))),
            }
        }
        Ok(PromptTemplate {
            id: id.ok_or_else(|| TemplateError::Header("missing id".into()))?,
            version: version.ok_or_else(|| TemplateError::Header("missing version".into()))?,
            body: body.trim_end_matches('\n').to_string(),
        })
    }

    /// Names of the `{slot}` placeholders, in order of first appearance.
    pub fn slots(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut rest = self.body.as_str();
        while let Some(open) = rest.find('{') {
            let after = &rest[open + 1..];
            match after.find('}') {
                Some(close) => {
                    let name = &after[..close];
                    if crate::ontology::is_identifier(name) && !out.iter().any(|s| s == name) {
                        out.push(name.to_string());
                    }
                    rest = &after[close + 1..];
                }
                None => break,
            }
        }
        out
    }

    pub fn render(&self, inputs: BTreeMap<String, String>) -> Result<Prompt, TemplateError> {
        let slots = self.slots();
        for slot in &slots {
            if !inputs.contains_key(slot) {
                return Err(TemplateError::MissingInput { template: self.id.clone(), name: slot.clone() });
            }
        }
        if let Some(extra) = inputs.keys().find(|k| !slots.contains(k)) {
            return Err(TemplateError::UnusedInput { template: self.id.clone(), name: extra.clone() });
        }
        // Single pass so input values containing `{x}` are never re-expanded.
        let mut text = String::with_capacity(self.body.len());
        let mut rest = self.body.as_str();
        while let Some(open) = rest.find('{') {
            text.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            match after.find('}').map(|close| (&after[..close], close)) {
                Some((name, close)) if inputs.contains_key(name) => {
                    text.push_str(&inputs[name]);
                    rest = &after[close + 1..];
                }
                _ => {
                    text.push('{');
                    rest = after;
                }
            }
        }
        text.push_str(rest);
        let digest = prompt_digest(&self.id, &self.version, &inputs);
        Ok(Prompt { template_id: self.id.clone(), template_version: self.version.clone(), inputs, text, digest })
    }
}

pub fn prompt_digest(template_id: &str, version: &str, inputs: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    h.update(template_id.as_bytes());
    h.update([0x1f]);
    h.update(version.as_bytes());
    for (k, v) in inputs {
        h.update([0x1e]);
        h.update(k.as_bytes());
        h.update([0x1f]);
        h.update(v.as_bytes());
    }
    hex::encode(h.finalize())
}

/// The templates the extraction stages use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub head_entities: PromptTemplate,
    pub relation_word: PromptTemplate,
    pub tail_type: PromptTemplate,
}

impl Default for PromptSet {
    fn default() -> Self {
        let load = |src: &str| PromptTemplate::parse(src).expect("bundled template is valid");
        PromptSet {
            head_entities: load(include_str!("../../prompts/head_entities.txt")),
            relation_word: load(include_str!("../../prompts/relation_word.txt")),
            tail_type: load(include_str!("../../prompts/tail_type.txt")),
        }
    }
}

pub(crate) fn inputs<const N: usize>(pairs: [(&str, &str); N]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}
