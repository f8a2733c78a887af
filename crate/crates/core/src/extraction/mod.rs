//! Content-level triple extraction.
//!
//! Three stages run per document: head entities are recognized over the
//! whole body by a language model ([`heads`]), each (segment, head) pair is
//! classified into a relation label ([`classifier`]), and the relation word
//! plus the tail span following it are located ([`tail`]). [`pipeline`]
//! assembles the results into schema-valid triples.

pub mod classifier;
pub mod heads;
pub mod llm;
pub mod pipeline;
pub mod prompt;
pub mod segment;
pub mod tail;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use classifier::{
    check_scores, ClassifierClient, ClassifierError, HttpClassifierClient, RuleClassifier, Scores, RULE_TRIGGERS,
};
pub use heads::{parse_head_response, recognize_head_entities, HeadEntityMention, HeadRecognition};
pub use llm::{HttpLlmClient, LlmClient, LlmError, RecordingClient, ReplayClient, TranscriptRecord};
pub use pipeline::{
    apply_assemblies, extract_corpus, extract_document, ingest_corpus, run_pipeline, Assembly, DocumentExtraction,
    ExtractionConfig, PipelineConfig, PipelineReport,
};
pub use prompt::{Prompt, PromptSet, PromptTemplate, TemplateError};
pub use segment::{segment_document, segment_text, Segment};
pub use tail::{extract_tail, TailExtraction};

pub const DEFAULT_TAU: f64 = 0.35;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtractionError {
    #[error(transparent)]
    Client(#[from] LlmError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("unparseable `{template}` response: {response:?}")]
    UnparseableResponse { template: String, response: String },
    #[error("head does not occur in the segment")]
    HeadNotInSegment,
    #[error("candidate abstained")]
    Abstained,
    #[error("unknown relation label `{0}`")]
    UnknownLabel(String),
    #[error("relation word {word:?} not found after the head")]
    RelationWordNotFound { word: String },
    #[error("tail span is empty")]
    EmptyTail,
    #[error("no legal tail type in response {response:?}")]
    TailTypeUnresolved { response: String },
}

impl ExtractionError {
    /// Report category name.
    pub fn category(&self) -> &'static str {
        match self {
            ExtractionError::Client(_) => "ClientError",
            ExtractionError::Template(_) => "TemplateError",
            ExtractionError::UnparseableResponse { .. } => "UnparseableResponse",
            ExtractionError::HeadNotInSegment => "HeadNotInSegment",
            ExtractionError::Abstained => "Abstained",
            ExtractionError::UnknownLabel(_) => "UnknownLabel",
            ExtractionError::RelationWordNotFound { .. } => "RelationWordNotFound",
            ExtractionError::EmptyTail => "EmptyTail",
            ExtractionError::TailTypeUnresolved { .. } => "TailTypeUnresolved",
        }
    }

    /// Errors that abandon the whole document rather than one candidate.
    pub fn is_document_fatal(&self) -> bool {
        matches!(
            self,
            ExtractionError::Client(_) | ExtractionError::Template(_) | ExtractionError::UnparseableResponse { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationCandidate {
    pub segment: Segment,
    pub head: HeadEntityMention,
    pub label: String,
    pub scores: Scores,
    pub abstained: bool,
    /// Set when the configured classifier failed and the rule table answered.
    pub fallback: Option<String>,
}

impl RelationCandidate {
    pub fn score(&self) -> f64 {
        self.scores.get(&self.label).copied().unwrap_or(0.0)
    }
}

/// Highest-scoring label; ties go to the lexicographically smallest code.
pub fn argmax(scores: &Scores) -> Option<(&str, f64)> {
    let mut best: Option<(&str, f64)> = None;
    for (label, &v) in scores {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((label, v));
        }
    }
    best
}

/// Scores one (segment, head) pair. When the classifier is unavailable or
/// breaks its contract, the fallback answers and the candidate records why.
pub fn classify_relation(
    segment: &Segment,
    head: &HeadEntityMention,
    classifier: &dyn ClassifierClient,
    fallback: &RuleClassifier,
    tau: f64,
) -> Result<RelationCandidate, ExtractionError> {
    if !segment.text.contains(&head.surface) {
        return Err(ExtractionError::HeadNotInSegment);
    }
    let (scores, fallback_note) = match classifier.classify(&segment.text, &head.surface) {
        Ok(scores) => (scores, None),
        Err(e) => {
            let scores = fallback.classify(&segment.text, &head.surface).expect("rule classifier is infallible");
            (scores, Some(format!("rule fallback: {e}")))
        }
    };
    let (label, top) = argmax(&scores).ok_or_else(|| ExtractionError::UnknownLabel(String::new()))?;
    Ok(RelationCandidate {
        segment: segment.clone(),
        head: head.clone(),
        label: label.to_string(),
        abstained: top < tau,
        scores,
        fallback: fallback_note,
    })
}
