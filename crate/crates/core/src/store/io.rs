//! Snapshot export/import.
//!
//! The jsonl dialect holds one entity record per line, then one record per
//! non-derived triple, both sorted by id, keys sorted, UTF-8. Derived inverse
//! edges are never written; the `inverse` field on a triple record names the
//! label that will be re-materialized on import.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{entity_id, Entity, EntityId, GraphStore, Provenance, StoreError, TripleId};
use crate::ontology::{OntologySchema, SignatureViolation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Jsonl,
    /// MERGE-style script for a property-graph database.
    GraphDbScript,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(ExportFormat::Jsonl),
            "graphdb_script" | "graphdb-script" | "cypher" => Ok(ExportFormat::GraphDbScript),
            other => Err(format!("unknown export format `{other}` (expected jsonl or graphdb_script)")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImportError {
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {violation}")]
    SignatureViolation { line: usize, violation: SignatureViolation },
    #[error("line {line}: {source}")]
    Invalid { line: usize, source: StoreError },
}

impl ImportError {
    pub fn line(&self) -> usize {
        match self {
            ImportError::Parse { line, .. }
            | ImportError::SignatureViolation { line, .. }
            | ImportError::Invalid { line, .. } => *line,
        }
    }
}

// Field order is alphabetical so the serialized keys come out sorted.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntityRecord {
    aliases: BTreeSet<String>,
    attributes: BTreeMap<String, serde_json::Value>,
    first_seen: Provenance,
    id: EntityId,
    kind: String,
    mention: String,
    #[serde(rename = "type")]
    type_code: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TripleRecord {
    head: EntityId,
    id: TripleId,
    inverse: Option<String>,
    kind: String,
    provenance: Vec<Provenance>,
    relation: String,
    tail: EntityId,
}

#[derive(Deserialize)]
struct KindProbe {
    kind: String,
}

pub fn export_graph(store: &GraphStore, format: ExportFormat) -> Vec<u8> {
    match format {
        ExportFormat::Jsonl => export_jsonl(store),
        ExportFormat::GraphDbScript => export_script(store),
    }
}

fn export_jsonl(store: &GraphStore) -> Vec<u8> {
    let mut out = String::new();
    for e in store.entities() {
        let record = EntityRecord {
            aliases: e.aliases.clone(),
            attributes: e.attributes.clone(),
            first_seen: e.first_seen.clone(),
            id: e.id.clone(),
            kind: "entity".into(),
            mention: e.canonical_mention.clone(),
            type_code: e.type_code.clone(),
        };
        out.push_str(&serde_json::to_string(&record).expect("entity record serializes"));
        out.push('\n');
    }
    for t in store.base_triples() {
        let inverse = store.schema().relation(&t.relation).and_then(|r| r.materialized_inverse()).map(str::to_string);
        let record = TripleRecord {
            head: t.head_id.clone(),
            id: t.id.clone(),
            inverse,
            kind: "triple".into(),
            provenance: t.provenance.clone(),
            relation: t.relation.clone(),
            tail: t.tail_id.clone(),
        };
        out.push_str(&serde_json::to_string(&record).expect("triple record serializes"));
        out.push('\n');
    }
    out.into_bytes()
}

fn cypher_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn cypher_name(s: &str) -> String {
    format!("`{}`", s.replace('`', "``"))
}

fn export_script(store: &GraphStore) -> Vec<u8> {
    let mut out = String::new();
    out.push_str("// forpkg property-graph import script\n");
    let _ = writeln!(
        out,
        "// {} nodes, {} relationships; safe to re-run (MERGE)",
        store.entity_count(),
        store.triple_count()
    );
    for e in store.entities() {
        let _ = writeln!(
            out,
            "MERGE (n:{} {{id: {}}}) SET n.mention = {}, n.doc_id = {}, n.confidence = {:?};",
            cypher_name(&e.type_code),
            cypher_string(&e.id.0),
            cypher_string(&e.canonical_mention),
            cypher_string(&e.first_seen.doc_id),
            e.first_seen.confidence,
        );
    }
    for t in store.base_triples() {
        let head = &store.entities[&t.head_id];
        let tail = &store.entities[&t.tail_id];
        let _ = writeln!(
            out,
            "MATCH (a:{} {{id: {}}}), (b:{} {{id: {}}}) MERGE (a)-[r:{}]->(b) SET r.doc_id = {}, r.confidence = {:?};",
            cypher_name(&head.type_code),
            cypher_string(&head.id.0),
            cypher_name(&tail.type_code),
            cypher_string(&tail.id.0),
            cypher_name(&t.relation),
            cypher_string(t.primary_doc_id().unwrap_or("")),
            t.confidence(),
        );
    }
    out.into_bytes()
}

/// Rebuilds a store from the jsonl dialect, re-checking every invariant and
/// re-materializing inverse edges.
pub fn import_graph(bytes: &[u8], schema: impl Into<Arc<OntologySchema>>) -> Result<GraphStore, ImportError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ImportError::Parse {
        line: 1 + bytes[..e.valid_up_to()].iter().filter(|b| **b == b'\n').count(),
        message: "invalid UTF-8".into(),
    })?;
    let mut store = GraphStore::new(schema);
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parse_err = |e: serde_json::Error| ImportError::Parse { line, message: e.to_string() };
        let probe: KindProbe = serde_json::from_str(raw).map_err(parse_err)?;
        match probe.kind.as_str() {
            "entity" => {
                let r: EntityRecord = serde_json::from_str(raw).map_err(parse_err)?;
                import_entity(&mut store, r).map_err(|source| ImportError::Invalid { line, source })?;
            }
            "triple" => {
                let r: TripleRecord = serde_json::from_str(raw).map_err(parse_err)?;
                import_triple(&mut store, r).map_err(|source| match source {
                    StoreError::SignatureViolation(violation) => ImportError::SignatureViolation { line, violation },
                    StoreError::UnknownRelationType(rel) | StoreError::NotForwardRelation(rel) => {
                        ImportError::Parse { line, message: format!("unknown relation code `{rel}`") }
                    }
                    source => ImportError::Invalid { line, source },
                })?;
            }
            other => return Err(ImportError::Parse { line, message: format!("unknown record kind `{other}`") }),
        }
    }
    store.verify().map_err(|source| ImportError::Invalid { line: 0, source })?;
    Ok(store)
}

fn import_entity(store: &mut GraphStore, r: EntityRecord) -> Result<(), StoreError> {
    if store.schema().entity_type(&r.type_code).is_none() {
        return Err(StoreError::UnknownEntityType(r.type_code));
    }
    if r.mention.trim().is_empty() || r.mention != crate::text::normalize_mention(&r.mention) {
        return Err(StoreError::EmptyMention);
    }
    r.first_seen.check()?;
    if entity_id(&r.type_code, &r.mention) != r.id {
        return Err(StoreError::Corrupt(format!("entity id {} does not match its content", r.id)));
    }
    store.insert_entity_record(Entity {
        id: r.id,
        type_code: r.type_code,
        canonical_mention: r.mention,
        aliases: r.aliases,
        first_seen: r.first_seen,
        attributes: r.attributes,
    });
    Ok(())
}

fn import_triple(store: &mut GraphStore, r: TripleRecord) -> Result<(), StoreError> {
    if r.provenance.is_empty() {
        return Err(StoreError::InvalidProvenance("triple without provenance".into()));
    }
    let outcome = store.insert_with_provenance(&r.head, &r.relation, &r.tail, r.provenance)?;
    if outcome.triple_id != r.id {
        return Err(StoreError::Corrupt(format!("triple id {} does not match its content", r.id)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::builtin_schema;
    use crate::store::Stage;

    fn sample() -> GraphStore {
        let mut s = GraphStore::new(builtin_schema());
        let p = Provenance::document_level("doc-1");
        let org = s.upsert_entity("ORG", "国家林业局", p.clone()).unwrap();
        let doc = s.upsert_entity("DOC", "退耕还林条例", p.clone()).unwrap();
        s.set_attribute(&doc, "release_date", "2002-12-14".into()).unwrap();
        s.insert_triple(&org, "publish", &doc, p).unwrap();
        s
    }

    #[test]
    fn empty_store_exports() {
        let s = GraphStore::new(builtin_schema());
        assert!(export_graph(&s, ExportFormat::Jsonl).is_empty());
        let script = String::from_utf8(export_graph(&s, ExportFormat::GraphDbScript)).unwrap();
        assert!(script.lines().all(|l| l.starts_with("//")));
        let back = import_graph(b"", builtin_schema()).unwrap();
        assert_eq!(back.entity_count(), 0);
    }

    #[test]
    fn publish_exports_three_records_and_reimports() {
        let s = sample();
        let bytes = export_graph(&s, ExportFormat::Jsonl);
        let text = String::from_utf8(bytes.clone()).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[2].contains("\"inverse\":\"isPublished\""));
        assert!(!text.contains("\"relation\":\"isPublished\""));

        let back = import_graph(&bytes, builtin_schema()).unwrap();
        assert_eq!(back.triple_count(), 1);
        assert_eq!(back.derived_count(), 1);
        assert_eq!(export_graph(&back, ExportFormat::Jsonl), bytes);
    }

    #[test]
    fn keys_are_sorted() {
        let text = String::from_utf8(export_graph(&sample(), ExportFormat::Jsonl)).unwrap();
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
            let mut sorted = keys.clone();
            sorted.sort();
            assert_eq!(keys, sorted);
            // the raw line order must match as well
            let positions: Vec<_> = keys.iter().map(|k| line.find(&format!("\"{k}\":")).unwrap()).collect();
            assert!(positions.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn script_is_merge_based() {
        let script = String::from_utf8(export_graph(&sample(), ExportFormat::GraphDbScript)).unwrap();
        let body: Vec<_> = script.lines().filter(|l| !l.starts_with("//")).collect();
        assert_eq!(body.len(), 3);
        assert!(body[0].starts_with("MERGE (n:`"));
        assert!(body[1].starts_with("MERGE (n:`"));
        assert!(body[2].contains("-[r:`publish`]->"));
        assert!(body[2].contains("r.confidence = 1.0"));
        assert!(script.contains("n.mention = \"国家林业局\""));
    }

    #[test]
    fn cypher_escaping() {
        assert_eq!(cypher_string("a\"b\\c\nd"), "\"a\\\"b\\\\c\\nd\"");
        assert_eq!(cypher_name("we`ird"), "`we``ird`");
    }

    #[test]
    fn import_errors_name_the_line() {
        let text = String::from_utf8(export_graph(&sample(), ExportFormat::Jsonl)).unwrap();
        let broken = text.replace("\"relation\":\"publish\"", "\"relation\":\"publishh\"");
        let err = import_graph(broken.as_bytes(), builtin_schema()).unwrap_err();
        assert_eq!(err.line(), 3);

        let garbage = format!("{text}{{not json\n");
        assert_eq!(import_graph(garbage.as_bytes(), builtin_schema()).unwrap_err().line(), 4);

        // retyping the org to PER makes the publish triple violate its domain
        let mut s = GraphStore::new(builtin_schema());
        let p = Provenance::new("d", Stage::Manual, 1.0);
        let per = s.upsert_entity("PER", "张三", p.clone()).unwrap();
        let doc = s.upsert_entity("DOC", "某条例", p.clone()).unwrap();
        let text = String::from_utf8(export_graph(&s, ExportFormat::Jsonl)).unwrap();
        let record = format!(
            "{{\"head\":\"{per}\",\"id\":\"x\",\"inverse\":null,\"kind\":\"triple\",\"provenance\":[{}],\"relation\":\"publish\",\"tail\":\"{doc}\"}}\n",
            serde_json::to_string(&p).unwrap()
        );
        let err = import_graph(format!("{text}{record}").as_bytes(), builtin_schema()).unwrap_err();
        assert!(matches!(err, ImportError::SignatureViolation { line: 3, .. }), "{err:?}");
    }
}
