//! Sentence-level segmentation of document bodies.

use serde::{Deserialize, Serialize};

use crate::corpus::PolicyDocument;
use crate::text::{is_punctuation, Span};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub doc_id: String,
    pub segment_index: usize,
    pub text: String,
    /// Character span of `text` within the document body.
    pub char_span: Span,
}

fn is_terminator(c: char) -> bool {
    matches!(c, '。' | '；' | '！' | '？')
}

/// Splits a body after each of 。；！？ and at newline runs. Fragments are
/// whitespace-trimmed; fragments left with no content character are dropped.
/// Terminators stay attached to the segment they close.
pub fn segment_document(doc: &PolicyDocument) -> Vec<Segment> {
    segment_text(&doc.doc_id, &doc.body)
}

pub fn segment_text(doc_id: &str, body: &str) -> Vec<Segment> {
    let chars: Vec<char> = body.chars().collect();
    let mut segments = Vec::new();
    let mut start = 0;
    let push = |from: usize, to: usize, segments: &mut Vec<Segment>| {
        let mut a = from;
        let mut b = to;
        while a < b && chars[a].is_whitespace() {
            a += 1;
        }
        while b > a && chars[b - 1].is_whitespace() {
            b -= 1;
        }
        if chars[a..b].iter().all(|c| is_punctuation(*c) || c.is_whitespace()) {
            return;
        }
        segments.push(Segment {
            doc_id: doc_id.to_string(),
            segment_index: segments.len(),
            text: chars[a..b].iter().collect(),
            char_span: Span::new(a, b),
        });
    };
    for (i, c) in chars.iter().enumerate() {
        if is_terminator(*c) {
            push(start, i + 1, &mut segments);
            start = i + 1;
        } else if *c == '\n' || *c == '\r' {
            push(start, i, &mut segments);
            start = i + 1;
        }
    }
    push(start, chars.len(), &mut segments);
    segments
}
