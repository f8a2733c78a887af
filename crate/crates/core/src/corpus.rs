//! Corpus loading and document-level knowledge.
//!
//! A corpus directory holds `<doc_id>.txt` bodies with optional
//! `<doc_id>.meta.json` sidecars (searched recursively). Metadata becomes
//! `publish` and `classifyTo` triples; dates, keywords and timeliness are kept
//! as attributes on the DOC entity since the ontology has no relation for
//! them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use aho_corasick::AhoCorasick;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{EntityId, GraphStore, Provenance, StoreError, TripleId};
use crate::text::{char_len, normalize_mention, Span};

/// Titles shorter than this are never treated as citations.
pub const MIN_CITATION_TITLE_CHARS: usize = 6;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {message}")]
    UnreadableFile { path: PathBuf, message: String },
    #[error("doc_id `{doc_id}` declared by both {first} and {second}")]
    DuplicateDocId { doc_id: String, first: PathBuf, second: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub subject: String,
    pub message: String,
}

impl Warning {
    pub fn new(subject: impl Into<String>, message: impl Into<String>) -> Self {
        Warning { subject: subject.into(), message: message.into() }
    }
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timeliness {
    InForce,
    Repealed,
    Expired,
    #[default]
    Unknown,
}

impl Timeliness {
    pub fn as_str(&self) -> &'static str {
        match self {
            Timeliness::InForce => "in_force",
            Timeliness::Repealed => "repealed",
            Timeliness::Expired => "expired",
            Timeliness::Unknown => "unknown",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "in_force" | "现行有效" | "有效" => Some(Timeliness::InForce),
            "repealed" | "已废止" | "废止" => Some(Timeliness::Repealed),
            "expired" | "失效" | "已失效" => Some(Timeliness::Expired),
            "unknown" | "" => Some(Timeliness::Unknown),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PolicyMetadata {
    pub issuing_org: String,
    pub release_date: Option<NaiveDate>,
    pub implementation_date: Option<NaiveDate>,
    pub keywords: Vec<String>,
    pub timeliness: Timeliness,
    pub category: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyDocument {
    pub doc_id: String,
    pub title: String,
    pub body: String,
    pub metadata: PolicyMetadata,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    /// Sorted by `doc_id`.
    pub documents: Vec<PolicyDocument>,
    pub warnings: Vec<Warning>,
}

impl Corpus {
    pub fn get(&self, doc_id: &str) -> Option<&PolicyDocument> {
        self.documents.binary_search_by(|d| d.doc_id.as_str().cmp(doc_id)).ok().map(|i| &self.documents[i])
    }
}

/// Sidecar file as written on disk. Everything is optional so a partial
/// sidecar still loads.
#[derive(Debug, Default, Deserialize, Serialize)]
pub struct Sidecar {
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default)]
    pub issuing_org: Option<String>,
    #[serde(default)]
    pub release_date: Option<String>,
    #[serde(default)]
    pub implementation_date: Option<String>,
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default)]
    pub timeliness: Option<String>,
    #[serde(default)]
    pub category: Option<String>,
}

fn parse_date(doc_id: &str, field: &str, raw: Option<&str>, warnings: &mut Vec<Warning>) -> Option<NaiveDate> {
    let raw = raw?.trim();
    if raw.is_empty() {
        return None;
    }
    match NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
        Ok(d) => Some(d),
        Err(_) => {
            warnings.push(Warning::new(doc_id, format!("malformed {field} `{raw}`, treated as unknown")));
            None
        }
    }
}

/// Builds a document from its body and (possibly missing) sidecar.
pub fn document_from_parts(
    doc_id: &str,
    body: String,
    sidecar: Option<Sidecar>,
    warnings: &mut Vec<Warning>,
) -> PolicyDocument {
    let sidecar = sidecar.unwrap_or_else(|| {
        warnings.push(Warning::new(doc_id, "no metadata sidecar; metadata marked unknown"));
        Sidecar::default()
    });
    let title = match sidecar.title.as_deref().map(normalize_mention) {
        Some(t) if !t.is_empty() => t,
        _ => {
            warnings.push(Warning::new(doc_id, "missing title; using doc_id"));
            doc_id.to_string()
        }
    };
    let release_date = parse_date(doc_id, "release_date", sidecar.release_date.as_deref(), warnings);
    let mut implementation_date =
        parse_date(doc_id, "implementation_date", sidecar.implementation_date.as_deref(), warnings);
    if let (Some(r), Some(i)) = (release_date, implementation_date) {
        if i < r {
            warnings.push(Warning::new(doc_id, format!("implementation_date {i} precedes release_date {r}; dropped")));
            implementation_date = None;
        }
    }
    let timeliness = match sidecar.timeliness.as_deref() {
        None => Timeliness::Unknown,
        Some(raw) => Timeliness::parse(raw).unwrap_or_else(|| {
            warnings.push(Warning::new(doc_id, format!("unknown timeliness `{raw}`")));
            Timeliness::Unknown
        }),
    };
    let category = sidecar.category.map(|c| normalize_mention(&c)).filter(|c| !c.is_empty());
    PolicyDocument {
        doc_id: doc_id.to_string(),
        title,
        body,
        metadata: PolicyMetadata {
            issuing_org: sidecar.issuing_org.map(|o| normalize_mention(&o)).unwrap_or_default(),
            release_date,
            implementation_date,
            keywords: sidecar.keywords.iter().map(|k| normalize_mention(k)).filter(|k| !k.is_empty()).collect(),
            timeliness,
            category,
        },
    }
}

fn read_text(path: &Path) -> Result<String, CorpusError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CorpusError::UnreadableFile { path: path.to_path_buf(), message: e.to_string() })?;
    let text = String::from_utf8(bytes)
        .map_err(|_| CorpusError::UnreadableFile { path: path.to_path_buf(), message: "not valid UTF-8".into() })?;
    Ok(text.strip_prefix('\u{feff}').map(str::to_string).unwrap_or(text))
}

/// Loads every `<doc_id>.txt` under `dir`. The result is sorted by doc_id
/// regardless of directory listing order.
pub fn load_corpus(dir: &Path) -> Result<Corpus, CorpusError> {
    if !dir.is_dir() {
        return Err(CorpusError::UnreadableFile { path: dir.to_path_buf(), message: "not a directory".into() });
    }
    let mut bodies: BTreeMap<String, PathBuf> = BTreeMap::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| CorpusError::UnreadableFile {
            path: e.path().map(Path::to_path_buf).unwrap_or_else(|| dir.to_path_buf()),
            message: e.to_string(),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy();
        let Some(doc_id) = name.strip_suffix(".txt") else { continue };
        if doc_id.is_empty() {
            continue;
        }
        if let Some(first) = bodies.get(doc_id) {
            return Err(CorpusError::DuplicateDocId {
                doc_id: doc_id.to_string(),
                first: first.clone(),
                second: entry.path().to_path_buf(),
            });
        }
        bodies.insert(doc_id.to_string(), entry.path().to_path_buf());
    }

    let mut corpus = Corpus::default();
    for (doc_id, path) in bodies {
        let body = read_text(&path)?;
        if body.trim().is_empty() {
            corpus.warnings.push(Warning::new(&doc_id, "empty body; document skipped"));
            continue;
        }
        let sidecar_path = path.with_file_name(format!("{doc_id}.meta.json"));
        let sidecar = if sidecar_path.is_file() {
            let raw = read_text(&sidecar_path)?;
            match serde_json::from_str::<Sidecar>(&raw) {
                Ok(s) => Some(s),
                Err(e) => {
                    corpus.warnings.push(Warning::new(&doc_id, format!("unparseable sidecar: {e}")));
                    None
                }
            }
        } else {
            None
        };
        let doc = document_from_parts(&doc_id, body, sidecar, &mut corpus.warnings);
        corpus.documents.push(doc);
    }
    for w in &corpus.warnings {
        log::warn!("{w}");
    }
    Ok(corpus)
}

/// Upserts the DOC entity for a document and refreshes its attributes.
pub fn doc_entity(store: &mut GraphStore, doc: &PolicyDocument) -> Result<EntityId, StoreError> {
    let id = store.upsert_entity("DOC", &doc.title, Provenance::document_level(&doc.doc_id))?;
    let m = &doc.metadata;
    store.set_attribute(&id, "doc_id", doc.doc_id.clone().into())?;
    if let Some(d) = m.release_date {
        store.set_attribute(&id, "release_date", d.to_string().into())?;
    }
    if let Some(d) = m.implementation_date {
        store.set_attribute(&id, "implementation_date", d.to_string().into())?;
    }
    if !m.keywords.is_empty() {
        store.set_attribute(&id, "keywords", m.keywords.clone().into())?;
    }
    store.set_attribute(&id, "timeliness", m.timeliness.as_str().into())?;
    Ok(id)
}

#[derive(Debug, Clone, Default)]
pub struct DocumentFacts {
    pub triple_ids: Vec<TripleId>,
    pub warnings: Vec<Warning>,
}

/// Emits the publish / classifyTo triples for one document.
pub fn metadata_to_triples(doc: &PolicyDocument, store: &mut GraphStore) -> Result<DocumentFacts, StoreError> {
    let mut facts = DocumentFacts::default();
    let doc_id = doc_entity(store, doc)?;
    let prov = Provenance::document_level(&doc.doc_id);
    if doc.metadata.issuing_org.is_empty() {
        facts.warnings.push(Warning::new(&doc.doc_id, "no issuing organization; publish triple skipped"));
    } else {
        let org = store.upsert_entity("ORG", &doc.metadata.issuing_org, prov.clone())?;
        facts.triple_ids.push(store.insert_triple(&org, "publish", &doc_id, prov.clone())?.triple_id);
    }
    if let Some(category) = &doc.metadata.category {
        let cls = store.upsert_entity("CLS", category, prov.clone())?;
        facts.triple_ids.push(store.insert_triple(&doc_id, "classifyTo", &cls, prov)?.triple_id);
    }
    Ok(facts)
}

/// Emits `cite` edges where document a's body contains document b's exact
/// title (at least [`MIN_CITATION_TITLE_CHARS`] characters), a != b.
pub fn detect_citations(corpus: &Corpus, store: &mut GraphStore) -> Result<Vec<TripleId>, StoreError> {
    let candidates: Vec<&PolicyDocument> =
        corpus.documents.iter().filter(|d| char_len(&d.title) >= MIN_CITATION_TITLE_CHARS).collect();
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let matcher = AhoCorasick::new(candidates.iter().map(|d| d.title.as_str())).expect("titles form a valid automaton");

    // (citing doc_id, cited doc_id) -> first match span in the citing body
    let mut found: BTreeMap<(String, String), Span> = BTreeMap::new();
    for citing in &corpus.documents {
        let mut seen = BTreeSet::new();
        for m in matcher.find_overlapping_iter(&citing.body) {
            let cited = candidates[m.pattern().as_usize()];
            if cited.doc_id == citing.doc_id || !seen.insert(cited.doc_id.as_str()) {
                continue;
            }
            let start = citing.body[..m.start()].chars().count();
            let span = Span::new(start, start + char_len(&cited.title));
            found.insert((citing.doc_id.clone(), cited.doc_id.clone()), span);
        }
    }

    let mut ids = Vec::new();
    for ((citing_id, cited_id), span) in found {
        let citing = corpus.get(&citing_id).expect("citing doc in corpus");
        let cited = corpus.get(&cited_id).expect("cited doc in corpus");
        let head = doc_entity(store, citing)?;
        let tail = doc_entity(store, cited)?;
        if head == tail {
            // distinct documents sharing one title
            continue;
        }
        let prov = Provenance::document_level(&citing.doc_id).with_span(span);
        let outcome = store.insert_triple(&head, "cite", &tail, prov)?;
        if !ids.contains(&outcome.triple_id) {
            ids.push(outcome.triple_id);
        }
    }
    Ok(ids)
}
