//! Validated triple store.
//!
//! Every stored triple passes the schema's signature check. Relations with a
//! declared, non-symmetric inverse get a derived reverse edge materialized at
//! insert time; symmetric relations (`relevant`) are stored once with their
//! endpoints in id order. Inserting an existing triple merges provenance.
//!
//! The store follows the usual borrow rules for concurrency: any number of
//! `&GraphStore` readers, or one `&mut GraphStore` writer. Wrap it in an
//! `RwLock` to share it across threads.

mod io;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ontology::{OntologyError, OntologySchema, ResolvedLabel, SignatureVerdict, SignatureViolation};
use crate::text::{normalize_mention, Span};

pub use io::{export_graph, import_graph, ExportFormat, ImportError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoreError {
    #[error("unknown entity type `{0}`")]
    UnknownEntityType(String),
    #[error("entity mention is empty after trimming")]
    EmptyMention,
    #[error("no entity with id {0}")]
    MissingEntity(EntityId),
    #[error("unknown relation `{0}`")]
    UnknownRelationType(String),
    #[error("`{0}` is an inverse label; store its forward relation instead")]
    NotForwardRelation(String),
    #[error("{0}")]
    SignatureViolation(SignatureViolation),
    #[error("invalid provenance: {0}")]
    InvalidProvenance(String),
    #[error("invalid neighbor query: {0}")]
    InvalidQuery(String),
    #[error("store invariant broken: {0}")]
    Corrupt(String),
}

impl From<OntologyError> for StoreError {
    fn from(e: OntologyError) -> Self {
        match e {
            OntologyError::UnknownEntityType(t) => StoreError::UnknownEntityType(t),
            OntologyError::UnknownRelationType(r) | OntologyError::UnknownRelationLabel(r) => {
                StoreError::UnknownRelationType(r)
            }
            OntologyError::SignatureViolation(v) => StoreError::SignatureViolation(v),
            other => StoreError::Corrupt(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub String);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TripleId(pub String);

impl fmt::Display for TripleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn digest_hex(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            hasher.update([0x1f]);
        }
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    hex::encode(&digest[..16])
}

/// Stable entity id: a digest of the type code and the normalized mention.
pub fn entity_id(type_code: &str, mention: &str) -> EntityId {
    EntityId(digest_hex(&[type_code, &normalize_mention(mention)]))
}

fn base_triple_id(head: &EntityId, relation: &str, tail: &EntityId) -> TripleId {
    TripleId(digest_hex(&["base", &head.0, relation, &tail.0]))
}

fn derived_triple_id(origin: &Triple, inverse: &str) -> TripleId {
    TripleId(digest_hex(&["derived", &origin.tail_id.0, inverse, &origin.head_id.0, &origin.relation]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    DocumentLevel,
    Similarity,
    HeadEntity,
    RelationClassify,
    TailExtract,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub doc_id: String,
    pub segment_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub char_span: Option<Span>,
    pub stage: Stage,
    pub confidence: f64,
    /// Free-form remark, e.g. that a fallback classifier produced the label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Provenance {
    pub fn new(doc_id: impl Into<String>, stage: Stage, confidence: f64) -> Self {
        Provenance { doc_id: doc_id.into(), segment_index: 0, char_span: None, stage, confidence, note: None }
    }

    /// Document-level facts carry full confidence.
    pub fn document_level(doc_id: impl Into<String>) -> Self {
        Provenance::new(doc_id, Stage::DocumentLevel, 1.0)
    }

    pub fn with_segment(mut self, index: usize) -> Self {
        self.segment_index = index;
        self
    }

    pub fn with_span(mut self, span: Span) -> Self {
        self.char_span = Some(span);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn check(&self) -> Result<(), StoreError> {
        if !(self.confidence.is_finite() && (0.0..=1.0).contains(&self.confidence)) {
            return Err(StoreError::InvalidProvenance(format!("confidence {} outside [0, 1]", self.confidence)));
        }
        if let Some(span) = self.char_span {
            if span.start >= span.end {
                return Err(StoreError::InvalidProvenance(format!(
                    "empty or reversed span {}..{}",
                    span.start, span.end
                )));
            }
        }
        Ok(())
    }

    /// Span bound check against the body the provenance points into.
    pub fn check_against(&self, document_chars: usize) -> Result<(), StoreError> {
        self.check()?;
        match self.char_span {
            Some(span) if span.end > document_chars => Err(StoreError::InvalidProvenance(format!(
                "span end {} beyond document length {document_chars}",
                span.end
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    pub id: EntityId,
    pub type_code: String,
    pub canonical_mention: String,
    pub aliases: BTreeSet<String>,
    pub first_seen: Provenance,
    /// Values that are not relations in the ontology (dates, keywords, ...).
    pub attributes: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triple {
    pub id: TripleId,
    pub head_id: EntityId,
    pub relation: String,
    pub tail_id: EntityId,
    pub provenance: Vec<Provenance>,
    pub derived: bool,
    /// Base triple this edge was materialized from (derived triples only).
    pub origin: Option<TripleId>,
}

impl Triple {
    /// Highest confidence across provenance records.
    pub fn confidence(&self) -> f64 {
        self.provenance.iter().map(|p| p.confidence).fold(0.0, f64::max)
    }

    pub fn primary_doc_id(&self) -> Option<&str> {
        self.provenance.first().map(|p| p.doc_id.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InsertOutcome {
    pub triple_id: TripleId,
    pub derived_id: Option<TripleId>,
    /// False when the triple already existed and only provenance was merged.
    pub created: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Out,
    In,
    Both,
}

#[derive(Debug, Clone)]
pub struct NeighborQuery {
    pub direction: Direction,
    pub relations: Option<BTreeSet<String>>,
    pub max: usize,
    /// Defaults to true for `In` queries and false otherwise.
    pub include_derived: Option<bool>,
}

impl NeighborQuery {
    pub fn new(direction: Direction, max: usize) -> Self {
        NeighborQuery { direction, relations: None, max, include_derived: None }
    }

    pub fn relations<I, S>(mut self, relations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.relations = Some(relations.into_iter().map(Into::into).collect());
        self
    }

    pub fn include_derived(mut self, include: bool) -> Self {
        self.include_derived = Some(include);
        self
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Neighbor<'a> {
    pub triple: &'a Triple,
    pub other: &'a Entity,
    /// True when the queried entity is the triple's head.
    pub outgoing: bool,
}

#[derive(Debug, Clone)]
pub struct GraphStore {
    schema: Arc<OntologySchema>,
    entities: BTreeMap<EntityId, Entity>,
    triples: BTreeMap<TripleId, Triple>,
    outgoing: HashMap<EntityId, BTreeSet<TripleId>>,
    incoming: HashMap<EntityId, BTreeSet<TripleId>>,
}

impl GraphStore {
    pub fn new(schema: impl Into<Arc<OntologySchema>>) -> Self {
        GraphStore {
            schema: schema.into(),
            entities: BTreeMap::new(),
            triples: BTreeMap::new(),
            outgoing: HashMap::new(),
            incoming: HashMap::new(),
        }
    }

    pub fn schema(&self) -> &OntologySchema {
        &self.schema
    }

    pub fn shared_schema(&self) -> Arc<OntologySchema> {
        Arc::clone(&self.schema)
    }

    pub fn entity(&self, id: &EntityId) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn find_entity(&self, type_code: &str, mention: &str) -> Option<&Entity> {
        self.entities.get(&entity_id(type_code, mention))
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn triple(&self, id: &TripleId) -> Option<&Triple> {
        self.triples.get(id)
    }

    /// All triples, derived included, in id order.
    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.triples.values()
    }

    pub fn base_triples(&self) -> impl Iterator<Item = &Triple> {
        self.triples.values().filter(|t| !t.derived)
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    /// Number of non-derived triples.
    pub fn triple_count(&self) -> usize {
        self.base_triples().count()
    }

    pub fn derived_count(&self) -> usize {
        self.triples.values().filter(|t| t.derived).count()
    }

    pub fn find_triple(&self, head: &EntityId, relation: &str, tail: &EntityId) -> Option<&Triple> {
        let (head, tail) = self.canonical_endpoints(head, relation, tail);
        self.triples.get(&base_triple_id(head, relation, tail))
    }

    /// Returns the id for (type, mention), creating the entity on first sight.
    pub fn upsert_entity(
        &mut self,
        type_code: &str,
        mention: &str,
        provenance: Provenance,
    ) -> Result<EntityId, StoreError> {
        if self.schema.entity_type(type_code).is_none() {
            return Err(StoreError::UnknownEntityType(type_code.to_string()));
        }
        let canonical = normalize_mention(mention);
        if canonical.is_empty() {
            return Err(StoreError::EmptyMention);
        }
        provenance.check()?;
        let id = entity_id(type_code, &canonical);
        self.entities.entry(id.clone()).or_insert_with(|| Entity {
            id: id.clone(),
            type_code: type_code.to_string(),
            canonical_mention: canonical,
            aliases: BTreeSet::new(),
            first_seen: provenance,
            attributes: BTreeMap::new(),
        });
        Ok(id)
    }

    pub fn add_alias(&mut self, id: &EntityId, alias: &str) -> Result<(), StoreError> {
        let entity = self.entities.get_mut(id).ok_or_else(|| StoreError::MissingEntity(id.clone()))?;
        let alias = normalize_mention(alias);
        if !alias.is_empty() && alias != entity.canonical_mention {
            entity.aliases.insert(alias);
        }
        Ok(())
    }

    pub fn set_attribute(&mut self, id: &EntityId, key: &str, value: serde_json::Value) -> Result<(), StoreError> {
        let entity = self.entities.get_mut(id).ok_or_else(|| StoreError::MissingEntity(id.clone()))?;
        entity.attributes.insert(key.to_string(), value);
        Ok(())
    }

    fn canonical_endpoints<'a>(
        &self,
        head: &'a EntityId,
        relation: &str,
        tail: &'a EntityId,
    ) -> (&'a EntityId, &'a EntityId) {
        let symmetric = self.schema.relation(relation).is_some_and(|r| r.is_symmetric);
        if symmetric && tail < head {
            (tail, head)
        } else {
            (head, tail)
        }
    }

    /// Stores a validated triple, materializing its inverse when the relation
    /// declares one. Re-inserting merges provenance.
    pub fn insert_triple(
        &mut self,
        head_id: &EntityId,
        relation: &str,
        tail_id: &EntityId,
        provenance: Provenance,
    ) -> Result<InsertOutcome, StoreError> {
        self.insert_with_provenance(head_id, relation, tail_id, vec![provenance])
    }

    pub(crate) fn insert_with_provenance(
        &mut self,
        head_id: &EntityId,
        relation: &str,
        tail_id: &EntityId,
        provenance: Vec<Provenance>,
    ) -> Result<InsertOutcome, StoreError> {
        let rel = match self.schema.resolve_label(relation) {
            Some(ResolvedLabel::Forward(rel)) => rel,
            Some(ResolvedLabel::Inverse(_)) => return Err(StoreError::NotForwardRelation(relation.to_string())),
            None => return Err(StoreError::UnknownRelationType(relation.to_string())),
        };
        let head = self.entities.get(head_id).ok_or_else(|| StoreError::MissingEntity(head_id.clone()))?;
        let tail = self.entities.get(tail_id).ok_or_else(|| StoreError::MissingEntity(tail_id.clone()))?;
        if let SignatureVerdict::Violation(v) =
            self.schema.validate_signature(&head.type_code, &rel.code, &tail.type_code)?
        {
            return Err(StoreError::SignatureViolation(v));
        }
        for p in &provenance {
            p.check()?;
        }
        let inverse = rel.materialized_inverse().map(str::to_string);
        let (head_id, tail_id) = self.canonical_endpoints(head_id, relation, tail_id);
        let id = base_triple_id(head_id, relation, tail_id);

        if let Some(existing) = self.triples.get_mut(&id) {
            let mut added = Vec::new();
            for p in provenance {
                if !existing.provenance.contains(&p) {
                    existing.provenance.push(p.clone());
                    added.push(p);
                }
            }
            let derived_id = inverse.as_deref().map(|inv| derived_triple_id(existing, inv));
            if let Some(derived) = derived_id.as_ref().and_then(|d| self.triples.get_mut(d)) {
                derived.provenance.extend(added);
            }
            return Ok(InsertOutcome { triple_id: id, derived_id, created: false });
        }

        let base = Triple {
            id: id.clone(),
            head_id: head_id.clone(),
            relation: relation.to_string(),
            tail_id: tail_id.clone(),
            provenance,
            derived: false,
            origin: None,
        };
        let derived = inverse.map(|inv| Triple {
            id: derived_triple_id(&base, &inv),
            head_id: base.tail_id.clone(),
            relation: inv,
            tail_id: base.head_id.clone(),
            provenance: base.provenance.clone(),
            derived: true,
            origin: Some(base.id.clone()),
        });
        self.link(base);
        let derived_id = derived.map(|d| {
            let did = d.id.clone();
            self.link(d);
            did
        });
        Ok(InsertOutcome { triple_id: id, derived_id, created: true })
    }

    fn link(&mut self, triple: Triple) {
        self.outgoing.entry(triple.head_id.clone()).or_default().insert(triple.id.clone());
        self.incoming.entry(triple.tail_id.clone()).or_default().insert(triple.id.clone());
        self.triples.insert(triple.id.clone(), triple);
    }

    pub(crate) fn insert_entity_record(&mut self, entity: Entity) {
        self.entities.insert(entity.id.clone(), entity);
    }

    /// Triples adjacent to `id`, sorted by (relation, other entity id).
    pub fn neighbors(&self, id: &EntityId, query: &NeighborQuery) -> Result<Vec<Neighbor<'_>>, StoreError> {
        if !self.entities.contains_key(id) {
            return Err(StoreError::MissingEntity(id.clone()));
        }
        if query.max == 0 {
            return Err(StoreError::InvalidQuery("max must be positive".into()));
        }
        let include_derived = query.include_derived.unwrap_or(query.direction == Direction::In);
        let empty = BTreeSet::new();
        let out_ids = matches!(query.direction, Direction::Out | Direction::Both)
            .then(|| self.outgoing.get(id).unwrap_or(&empty));
        let in_ids =
            matches!(query.direction, Direction::In | Direction::Both).then(|| self.incoming.get(id).unwrap_or(&empty));

        let mut seen = BTreeSet::new();
        let mut result = Vec::new();
        let candidates =
            out_ids.into_iter().flatten().map(|t| (t, true)).chain(in_ids.into_iter().flatten().map(|t| (t, false)));
        for (tid, outgoing) in candidates {
            if !seen.insert(tid) {
                continue;
            }
            let triple = &self.triples[tid];
            if triple.derived && !include_derived {
                continue;
            }
            if let Some(filter) = &query.relations {
                if !filter.contains(&triple.relation) {
                    continue;
                }
            }
            let other_id = if outgoing { &triple.tail_id } else { &triple.head_id };
            result.push(Neighbor { triple, other: &self.entities[other_id], outgoing });
        }
        result.sort_by(|a, b| {
            (&a.triple.relation, &a.other.id, &a.triple.id).cmp(&(&b.triple.relation, &b.other.id, &b.triple.id))
        });
        result.truncate(query.max);
        Ok(result)
    }

    /// Full scan of every store invariant.
    pub fn verify(&self) -> Result<(), StoreError> {
        let corrupt = |msg: String| Err(StoreError::Corrupt(msg));
        for (id, e) in &self.entities {
            if self.schema.entity_type(&e.type_code).is_none() {
                return Err(StoreError::UnknownEntityType(e.type_code.clone()));
            }
            if &entity_id(&e.type_code, &e.canonical_mention) != id {
                return corrupt(format!("entity {id} does not match its content digest"));
            }
        }
        let mut expected_derived = 0usize;
        for (id, t) in &self.triples {
            let (Some(head), Some(tail)) = (self.entities.get(&t.head_id), self.entities.get(&t.tail_id)) else {
                return corrupt(format!("triple {id} references a missing entity"));
            };
            if t.derived {
                let Some(origin) = t.origin.as_ref().and_then(|o| self.triples.get(o)) else {
                    return corrupt(format!("derived triple {id} has no origin"));
                };
                if origin.derived || origin.head_id != t.tail_id || origin.tail_id != t.head_id {
                    return corrupt(format!("derived triple {id} does not mirror its origin"));
                }
                let inverse = self.schema.relation(&origin.relation).and_then(|r| r.materialized_inverse());
                if inverse != Some(t.relation.as_str()) {
                    return corrupt(format!("derived triple {id} has label {}", t.relation));
                }
                if self.schema.relation(&t.relation).is_some() {
                    self.schema.validate_signature(&head.type_code, &t.relation, &tail.type_code)?.into_result()?;
                }
            } else {
                let Some(rel) = self.schema.relation(&t.relation) else {
                    return Err(StoreError::UnknownRelationType(t.relation.clone()));
                };
                self.schema.validate_signature(&head.type_code, &t.relation, &tail.type_code)?.into_result()?;
                if let Some(inv) = rel.materialized_inverse() {
                    expected_derived += 1;
                    if !self.triples.contains_key(&derived_triple_id(t, inv)) {
                        return corrupt(format!("triple {id} lacks its `{inv}` inverse"));
                    }
                }
                if t.id != base_triple_id(&t.head_id, &t.relation, &t.tail_id) {
                    return corrupt(format!("triple {id} does not match its content digest"));
                }
            }
        }
        if expected_derived != self.derived_count() {
            return corrupt(format!(
                "{} derived triples for {expected_derived} inverse-bearing base triples",
                self.derived_count()
            ));
        }
        Ok(())
    }
}
