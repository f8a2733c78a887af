//! Stage three: relation-word localization and tail span extraction.

use serde::{Deserialize, Serialize};

use super::llm::LlmClient;
use super::prompt::{inputs, PromptSet};
use super::{ExtractionError, RelationCandidate};
use crate::ontology::OntologySchema;
use crate::text::{find_from, is_punctuation, slice_chars, Span};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailExtraction {
    pub candidate: RelationCandidate,
    pub relation_word: String,
    /// Span within the segment text.
    pub relation_word_span: Span,
    pub tail_surface: String,
    /// Span within the segment text.
    pub tail_span: Span,
    pub tail_type_code: String,
}

const BRACKETS: &[(char, char)] = &[
    ('《', '》'),
    ('（', '）'),
    ('(', ')'),
    ('「', '」'),
    ('『', '』'),
    ('“', '”'),
    ('【', '】'),
    ('[', ']'),
    ('〈', '〉'),
    ('"', '"'),
];

fn is_open(c: char) -> bool {
    BRACKETS.iter().any(|(o, _)| *o == c)
}

fn is_close(c: char) -> bool {
    BRACKETS.iter().any(|(_, cl)| *cl == c)
}

/// Trims a char range of `chars`: leading whitespace and non-bracket
/// punctuation, trailing whitespace and non-bracket punctuation, then one
/// enclosing bracket pair at a time.
pub fn trim_tail(chars: &[char], mut span: Span) -> Span {
    loop {
        let before = span;
        while span.start < span.end && {
            let c = chars[span.start];
            c.is_whitespace() || (is_punctuation(c) && !is_open(c))
        } {
            span.start += 1;
        }
        while span.end > span.start && {
            let c = chars[span.end - 1];
            c.is_whitespace() || (is_punctuation(c) && !is_close(c))
        } {
            span.end -= 1;
        }
        if span.len() >= 2 {
            let (first, last) = (chars[span.start], chars[span.end - 1]);
            let enclosing =
                BRACKETS.iter().any(|(o, c)| *o == first && *c == last) && encloses(&chars[span.start..span.end]);
            if enclosing {
                span = Span::new(span.start + 1, span.end - 1);
            }
        }
        if span == before {
            return span;
        }
    }
}

/// True when the first char's bracket closes only at the last char.
fn encloses(run: &[char]) -> bool {
    let open = run[0];
    let close = run[run.len() - 1];
    let mut depth = 0i32;
    for (i, c) in run.iter().enumerate() {
        if *c == open && (open != close || i == 0) {
            depth += 1;
        } else if *c == close {
            depth -= 1;
            if depth == 0 && i != run.len() - 1 {
                return false;
            }
        }
    }
    depth == 0
}

fn clean_word(response: &str) -> String {
    let first = response.trim().lines().next().unwrap_or("").trim();
    let chars: Vec<char> = first.chars().collect();
    let span = trim_tail(&chars, Span::new(0, chars.len()));
    chars[span.start..span.end].iter().collect()
}

/// Picks the first legal type code named in a free-text response.
pub fn parse_type_response<'a>(response: &str, legal: impl IntoIterator<Item = &'a String>) -> Option<String> {
    let legal: Vec<&String> = legal.into_iter().collect();
    response
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .find_map(|tok| legal.iter().find(|l| l.eq_ignore_ascii_case(tok)).map(|l| l.to_string()))
}

/// Asks for the relation word, locates it after the head's first occurrence
/// and takes the rest of the segment as the tail.
pub fn extract_tail(
    candidate: &RelationCandidate,
    client: &dyn LlmClient,
    schema: &OntologySchema,
    prompts: &PromptSet,
) -> Result<TailExtraction, ExtractionError> {
    if candidate.abstained {
        return Err(ExtractionError::Abstained);
    }
    let segment = &candidate.segment;
    let head = &candidate.head.surface;
    let display = schema
        .label_display_name(&candidate.label)
        .ok_or_else(|| ExtractionError::UnknownLabel(candidate.label.clone()))?;
    let prompt = prompts.relation_word.render(inputs([
        ("segment", segment.text.as_str()),
        ("head", head.as_str()),
        ("relation", display),
    ]))?;
    let response = client.complete(&prompt)?;
    let word = clean_word(&response);
    if word.is_empty() {
        return Err(ExtractionError::RelationWordNotFound { word: response.trim().to_string() });
    }
    let head_span = find_from(&segment.text, head, 0).ok_or(ExtractionError::HeadNotInSegment)?;
    let word_span = find_from(&segment.text, &word, head_span.end)
        .ok_or_else(|| ExtractionError::RelationWordNotFound { word: word.clone() })?;

    let chars: Vec<char> = segment.text.chars().collect();
    let tail_span = trim_tail(&chars, Span::new(word_span.end, chars.len()));
    if tail_span.is_empty() {
        return Err(ExtractionError::EmptyTail);
    }
    let tail_surface = slice_chars(&segment.text, tail_span).to_string();

    let (_, range) = schema
        .label_signature(&candidate.label)
        .ok_or_else(|| ExtractionError::UnknownLabel(candidate.label.clone()))?;
    let tail_type_code = if range.len() == 1 {
        range.iter().next().expect("singleton").clone()
    } else {
        let listing = range
            .iter()
            .map(|code| {
                let name = schema.entity_type(code).map_or("", |t| t.display_name.as_str());
                format!("{code}: {name}")
            })
            .collect::<Vec<_>>()
            .join("\n");
        let prompt = prompts.tail_type.render(inputs([
            ("segment", segment.text.as_str()),
            ("head", head.as_str()),
            ("relation", display),
            ("tail", tail_surface.as_str()),
            ("types", listing.as_str()),
        ]))?;
        let response = client.complete(&prompt)?;
        parse_type_response(&response, range)
            .ok_or_else(|| ExtractionError::TailTypeUnresolved { response: response.trim().to_string() })?
    };

    Ok(TailExtraction {
        candidate: candidate.clone(),
        relation_word: word,
        relation_word_span: word_span,
        tail_surface,
        tail_span,
        tail_type_code,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trimmed(s: &str) -> String {
        let chars: Vec<char> = s.chars().collect();
        let span = trim_tail(&chars, Span::new(0, chars.len()));
        chars[span.start..span.end].iter().collect()
    }

    #[test]
    fn tail_trimming() {
        assert_eq!(trimmed("高3米以下…的木本植物。"), "高3米以下…的木本植物");
        assert_eq!(trimmed("《退耕还林条例》。"), "退耕还林条例");
        assert_eq!(trimmed("：《（试行）办法》；"), "（试行）办法");
        assert_eq!(trimmed("管理办法（试行）"), "管理办法（试行）");
        assert_eq!(trimmed("（甲）和（乙）"), "（甲）和（乙）");
        assert_eq!(trimmed("。；"), "");
    }

    #[test]
    fn type_response_parsing() {
        let legal: Vec<String> = vec!["ACT".into(), "STATE".into()];
        assert_eq!(parse_type_response("类型：state", &legal), Some("STATE".into()));
        assert_eq!(parse_type_response("ORG", &legal), None);
    }
}
