//! Character-offset helpers. All spans in this crate count Unicode scalar
//! values, not bytes, so they mean the same thing to non-Rust consumers.

use serde::{Deserialize, Serialize};

/// Half-open character range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn shift(&self, by: usize) -> Span {
        Span::new(self.start + by, self.end + by)
    }
}

pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

fn byte_offset(s: &str, char_idx: usize) -> usize {
    s.char_indices().nth(char_idx).map(|(b, _)| b).unwrap_or(s.len())
}

/// Slices `s` by character span. Out-of-range ends are clamped.
pub fn slice_chars(s: &str, span: Span) -> &str {
    let start = byte_offset(s, span.start);
    let end = byte_offset(s, span.end.max(span.start));
    &s[start..end]
}

/// All non-overlapping occurrences of `needle`, left to right.
pub fn find_all(haystack: &str, needle: &str) -> Vec<Span> {
    if needle.is_empty() {
        return Vec::new();
    }
    let needle_chars = char_len(needle);
    let mut spans = Vec::new();
    let mut last_byte = 0;
    let mut last_char = 0;
    for (b, _) in haystack.match_indices(needle) {
        last_char += haystack[last_byte..b].chars().count();
        last_byte = b;
        spans.push(Span::new(last_char, last_char + needle_chars));
    }
    spans
}

/// First occurrence of `needle` starting at or after character `from`.
pub fn find_from(haystack: &str, needle: &str, from: usize) -> Option<Span> {
    if needle.is_empty() {
        return None;
    }
    let start_byte = byte_offset(haystack, from);
    let rel = haystack[start_byte..].find(needle)?;
    let start = from + haystack[start_byte..start_byte + rel].chars().count();
    Some(Span::new(start, start + char_len(needle)))
}

/// Identity normalization for entity mentions: trims ASCII and CJK
/// whitespace only; case and inner punctuation are kept.
pub fn normalize_mention(s: &str) -> String {
    s.trim_matches(char::is_whitespace).to_string()
}

/// ASCII punctuation plus the common CJK and full-width punctuation blocks.
pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c as u32,
            0x2010..=0x2027 | 0x2030..=0x205E | 0x3000..=0x303F
            | 0xFF01..=0xFF0F | 0xFF1A..=0xFF20 | 0xFF3B..=0xFF40 | 0xFF5B..=0xFF65
            | 0x00B7 | 0x00AB | 0x00BB)
}

/// Removes all whitespace and punctuation.
pub fn strip_space_and_punct(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace() && !is_punctuation(*c)).collect()
}
