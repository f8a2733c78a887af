//! End-to-end graph construction over a corpus.
//!
//! Documents are extracted concurrently, but every store write happens on
//! the calling thread in doc_id order, so the resulting graph does not
//! depend on scheduling.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::classifier::{ClassifierClient, RuleClassifier};
use super::heads::recognize_head_entities;
use super::llm::LlmClient;
use super::prompt::PromptSet;
use super::segment::segment_document;
use super::tail::extract_tail;
use super::{classify_relation, ExtractionError, DEFAULT_TAU};
use crate::corpus::{detect_citations, metadata_to_triples, Corpus, PolicyDocument};
use crate::ontology::{OntologySchema, Role};
use crate::similarity::{build_relevance_edges, EmbeddingCache, EmbeddingProvider, SimilarityConfig, SimilarityError};
use crate::store::{GraphStore, Provenance, Stage, StoreError};
use crate::text::Span;

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionConfig {
    /// Abstention threshold on the top classifier score.
    pub tau: f64,
    /// Documents extracted concurrently.
    pub parallelism: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig { tau: DEFAULT_TAU, parallelism: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub extraction: ExtractionConfig,
    pub similarity: SimilarityConfig,
}

/// Per-stage tallies. Merging is commutative: counts add, maps union-add
/// and warnings are kept sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub documents: usize,
    pub document_level_triples: usize,
    pub citation_triples: usize,
    pub similarity_evaluations: usize,
    pub relevance_edges: usize,
    pub head_mentions: usize,
    pub heads_dropped: usize,
    pub candidates: usize,
    pub abstained: usize,
    pub classifier_fallbacks: usize,
    pub tails_extracted: usize,
    pub assembled: usize,
    pub dropped_schema_violations: usize,
    pub triples_inserted: usize,
    /// Skips by error category.
    pub errors: BTreeMap<String, usize>,
    /// doc_id to the error that abandoned it.
    pub failed_documents: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

impl PipelineReport {
    pub fn merge(&mut self, other: PipelineReport) {
        self.documents += other.documents;
        self.document_level_triples += other.document_level_triples;
        self.citation_triples += other.citation_triples;
        self.similarity_evaluations += other.similarity_evaluations;
        self.relevance_edges += other.relevance_edges;
        self.head_mentions += other.head_mentions;
        self.heads_dropped += other.heads_dropped;
        self.candidates += other.candidates;
        self.abstained += other.abstained;
        self.classifier_fallbacks += other.classifier_fallbacks;
        self.tails_extracted += other.tails_extracted;
        self.assembled += other.assembled;
        self.dropped_schema_violations += other.dropped_schema_violations;
        self.triples_inserted += other.triples_inserted;
        for (k, v) in other.errors {
            *self.errors.entry(k).or_default() += v;
        }
        self.failed_documents.extend(other.failed_documents);
        self.warnings.extend(other.warnings);
        self.warnings.sort();
    }

    fn count_error(&mut self, category: &str) {
        *self.errors.entry(category.to_string()).or_default() += 1;
    }

    pub fn has_failures(&self) -> bool {
        !self.failed_documents.is_empty()
    }
}

/// A fully extracted fact, as written by the model: the label may be an
/// inverse and the types are unchecked until [`apply_assemblies`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assembly {
    pub doc_id: String,
    pub segment_index: usize,
    pub head_surface: String,
    pub head_type: String,
    /// Character span of the head occurrence in the document body.
    pub head_span: Option<Span>,
    pub label: String,
    pub tail_surface: String,
    pub tail_type: String,
    /// Character span of the tail in the document body.
    pub tail_span: Option<Span>,
    pub confidence: f64,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct DocumentExtraction {
    pub doc_id: String,
    pub assemblies: Vec<Assembly>,
    pub report: PipelineReport,
}

/// Runs the three stages on one document without touching the store.
pub fn extract_document(
    doc: &PolicyDocument,
    llm: &dyn LlmClient,
    classifier: &dyn ClassifierClient,
    fallback: &RuleClassifier,
    schema: &OntologySchema,
    prompts: &PromptSet,
    tau: f64,
) -> DocumentExtraction {
    let mut out = DocumentExtraction { doc_id: doc.doc_id.clone(), ..Default::default() };
    out.report.documents = 1;
    match extract_inner(doc, llm, classifier, fallback, schema, prompts, tau, &mut out.report) {
        Ok(assemblies) => out.assemblies = assemblies,
        Err(e) => {
            out.report.count_error(e.category());
            out.report.failed_documents.insert(doc.doc_id.clone(), e.to_string());
            out.assemblies.clear();
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn extract_inner(
    doc: &PolicyDocument,
    llm: &dyn LlmClient,
    classifier: &dyn ClassifierClient,
    fallback: &RuleClassifier,
    schema: &OntologySchema,
    prompts: &PromptSet,
    tau: f64,
    report: &mut PipelineReport,
) -> Result<Vec<Assembly>, ExtractionError> {
    let heads = recognize_head_entities(doc, llm, schema, prompts)?;
    report.head_mentions += heads.mentions.len();
    report.heads_dropped += heads.dropped;
    report.warnings.extend(heads.warnings.iter().map(|w| w.to_string()));

    let mut assemblies = Vec::new();
    for segment in segment_document(doc) {
        for head in &heads.mentions {
            let Some(occurrence) = head.occurrences.iter().find(|o| segment.char_span.contains(o)) else {
                continue;
            };
            report.candidates += 1;
            let candidate = match classify_relation(&segment, head, classifier, fallback, tau) {
                Ok(c) => c,
                Err(e) => {
                    report.count_error(e.category());
                    continue;
                }
            };
            if candidate.fallback.is_some() {
                report.classifier_fallbacks += 1;
                report.count_error("ClassifierUnavailable");
            }
            if candidate.abstained {
                report.abstained += 1;
                continue;
            }
            let tail = match extract_tail(&candidate, llm, schema, prompts) {
                Ok(t) => t,
                Err(e) if e.is_document_fatal() => return Err(e),
                Err(e) => {
                    report.count_error(e.category());
                    continue;
                }
            };
            report.tails_extracted += 1;
            assemblies.push(Assembly {
                doc_id: doc.doc_id.clone(),
                segment_index: segment.segment_index,
                head_surface: head.surface.clone(),
                head_type: head.type_code.clone(),
                head_span: Some(*occurrence),
                label: candidate.label.clone(),
                tail_surface: tail.tail_surface.clone(),
                tail_type: tail.tail_type_code.clone(),
                tail_span: Some(tail.tail_span.shift(segment.char_span.start)),
                confidence: candidate.score().clamp(0.0, 1.0),
                note: candidate.fallback.clone(),
            });
        }
    }
    Ok(assemblies)
}

/// Normalizes and stores assemblies in order. Anything failing the schema
/// is counted as dropped and never reaches the store.
pub fn apply_assemblies(store: &mut GraphStore, assemblies: &[Assembly], report: &mut PipelineReport) {
    for a in assemblies {
        let normalized = match store.schema().normalize_relation(&a.head_type, &a.label, &a.tail_type) {
            Ok(n) => n,
            Err(e) => {
                report.dropped_schema_violations += 1;
                report
                    .warnings
                    .push(format!("{}: dropped {} -[{}]-> {}: {e}", a.doc_id, a.head_surface, a.label, a.tail_surface));
                continue;
            }
        };
        let side = |role: Role| match role {
            Role::Head => (&a.head_surface, a.head_span, Stage::HeadEntity),
            Role::Tail => (&a.tail_surface, a.tail_span, Stage::TailExtract),
        };
        let (h_surface, h_span, h_stage) = side(normalized.head_role);
        let (t_surface, t_span, t_stage) = side(normalized.tail_role);
        let result = (|| -> Result<bool, StoreError> {
            let entity_prov = |stage, span: Option<Span>| {
                let p = Provenance::new(&a.doc_id, stage, a.confidence).with_segment(a.segment_index);
                match span {
                    Some(s) => p.with_span(s),
                    None => p,
                }
            };
            let head = store.upsert_entity(&normalized.head_type, h_surface, entity_prov(h_stage, h_span))?;
            let tail = store.upsert_entity(&normalized.tail_type, t_surface, entity_prov(t_stage, t_span))?;
            if head == tail {
                return Ok(false);
            }
            let mut prov = entity_prov(Stage::TailExtract, a.tail_span);
            if let Some(note) = &a.note {
                prov = prov.with_note(note);
            }
            Ok(store.insert_triple(&head, &normalized.relation, &tail, prov)?.created)
        })();
        match result {
            Ok(created) => {
                report.assembled += 1;
                if created {
                    report.triples_inserted += 1;
                }
            }
            Err(e) => {
                report.dropped_schema_violations += 1;
                report
                    .warnings
                    .push(format!("{}: dropped {} -[{}]-> {}: {e}", a.doc_id, a.head_surface, a.label, a.tail_surface));
            }
        }
    }
}

/// Extracts every document (up to `parallelism` at once) and then applies
/// the results to the store in doc_id order.
pub fn extract_corpus(
    corpus: &Corpus,
    llm: &dyn LlmClient,
    classifier: &dyn ClassifierClient,
    config: &ExtractionConfig,
    store: &mut GraphStore,
) -> PipelineReport {
    let schema = store.shared_schema();
    let fallback = RuleClassifier::new(&schema);
    let prompts = PromptSet::default();
    let docs = &corpus.documents;
    let next = AtomicUsize::new(0);
    let workers = config.parallelism.clamp(1, docs.len().max(1));

    let mut results: Vec<DocumentExtraction> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(doc) = docs.get(i) else { break };
                        done.push(extract_document(doc, llm, classifier, &fallback, &schema, &prompts, config.tau));
                    }
                    done
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("extraction worker panicked")).collect()
    });
    results.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));

    let mut report = PipelineReport::default();
    for r in results {
        apply_assemblies(store, &r.assemblies, &mut report);
        report.merge(r.report);
    }
    report
}

/// Document-level facts: publish / classifyTo from metadata plus citations.
pub fn ingest_corpus(corpus: &Corpus, store: &mut GraphStore) -> Result<PipelineReport, StoreError> {
    let mut report = PipelineReport::default();
    report.warnings.extend(corpus.warnings.iter().map(|w| w.to_string()));
    for doc in &corpus.documents {
        let facts = metadata_to_triples(doc, store)?;
        report.document_level_triples += facts.triple_ids.len();
        report.warnings.extend(facts.warnings.iter().map(|w| w.to_string()));
    }
    report.citation_triples = detect_citations(corpus, store)?.len();
    report.warnings.sort();
    Ok(report)
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

/// Ingest, similarity linking, then extraction. Only corpus-level failures
/// are errors; per-document problems land in the report.
pub fn run_pipeline(
    corpus: &Corpus,
    llm: &dyn LlmClient,
    classifier: &dyn ClassifierClient,
    provider: &dyn EmbeddingProvider,
    config: &PipelineConfig,
    store: &mut GraphStore,
    cache: Option<&mut EmbeddingCache>,
) -> Result<PipelineReport, PipelineError> {
    if corpus.documents.is_empty() {
        return Ok(PipelineReport::default());
    }
    let mut report = ingest_corpus(corpus, store)?;
    let relevance = build_relevance_edges(&corpus.documents, provider, &config.similarity, store, cache)?;
    report.similarity_evaluations = relevance.evaluations;
    report.relevance_edges = relevance.triple_ids.len();
    report.merge(extract_corpus(corpus, llm, classifier, &config.extraction, store));
    Ok(report)
}
