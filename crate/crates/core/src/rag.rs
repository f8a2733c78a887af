//! Graph retrieval for prompting: lexical entity linking, bounded k-hop
//! subgraph expansion and a plain-text context block.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use aho_corasick::AhoCorasick;
use thiserror::Error;

use crate::store::{Direction, EntityId, GraphStore, NeighborQuery, StoreError, Triple};
use crate::text::Span;

pub const DEFAULT_MAX_HOPS: usize = 2;
pub const DEFAULT_MAX_TRIPLES: usize = 40;
pub const DEFAULT_CONTEXT_CHARS: usize = 4000;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetrievalConfig {
    pub max_hops: usize,
    pub max_triples: usize,
    /// Only these relations are traversed and returned.
    pub relation_filter: Option<BTreeSet<String>>,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig { max_hops: DEFAULT_MAX_HOPS, max_triples: DEFAULT_MAX_TRIPLES, relation_filter: None }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.max_hops == 0 {
            return Err(RetrievalError::InvalidConfig("max_hops must be at least 1".into()));
        }
        if self.max_triples == 0 {
            return Err(RetrievalError::InvalidConfig("max_triples must be positive".into()));
        }
        Ok(())
    }
}

/// Entities whose canonical mention or an alias occurs in `query`. Longer
/// matches win and overlapping shorter ones are suppressed; entities sharing
/// the winning surface are all returned. Ordered by match position, then id.
pub fn link_query(query: &str, store: &GraphStore) -> Vec<EntityId> {
    let mut by_surface: BTreeMap<&str, BTreeSet<&EntityId>> = BTreeMap::new();
    for e in store.entities() {
        for surface in std::iter::once(&e.canonical_mention).chain(&e.aliases) {
            by_surface.entry(surface.as_str()).or_default().insert(&e.id);
        }
    }
    if by_surface.is_empty() || query.is_empty() {
        return Vec::new();
    }
    let surfaces: Vec<&str> = by_surface.keys().copied().collect();
    let matcher = AhoCorasick::new(&surfaces).expect("mention automaton");

    let mut hits: Vec<(Span, &str)> = matcher
        .find_overlapping_iter(query)
        .map(|m| {
            let start = query[..m.start()].chars().count();
            let len = query[m.start()..m.end()].chars().count();
            (Span::new(start, start + len), surfaces[m.pattern().as_usize()])
        })
        .collect();
    hits.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.start.cmp(&b.0.start)).then(a.1.cmp(b.1)));

    let mut accepted: Vec<(Span, &str)> = Vec::new();
    for (span, surface) in hits {
        if accepted.iter().all(|(s, _)| !s.overlaps(&span)) {
            accepted.push((span, surface));
        }
    }
    accepted.sort();
    let mut seen = BTreeSet::new();
    accepted
        .into_iter()
        .flat_map(|(_, s)| by_surface[s].iter().copied())
        .filter(|id| seen.insert((*id).clone()))
        .cloned()
        .collect()
}

/// Breadth-first expansion from `seeds` over non-derived triples in either
/// direction. A triple found while expanding a node at distance d has hop
/// d + 1; triples beyond `max_hops` are ignored. The result is ordered by
/// hop, then confidence descending, then triple id, and truncated to
/// `max_triples`.
pub fn retrieve_subgraph<'a>(
    seeds: &[EntityId],
    store: &'a GraphStore,
    config: &RetrievalConfig,
) -> Result<Vec<&'a Triple>, RetrievalError> {
    config.validate()?;
    for s in seeds {
        if store.entity(s).is_none() {
            return Err(StoreError::MissingEntity(s.clone()).into());
        }
    }
    let mut query = NeighborQuery::new(Direction::Both, usize::MAX).include_derived(false);
    query.relations = config.relation_filter.clone();

    let mut dist: BTreeMap<&EntityId, usize> = BTreeMap::new();
    let mut queue = VecDeque::new();
    for s in seeds {
        if !dist.contains_key(s) {
            dist.insert(s, 0);
            queue.push_back(s);
        }
    }
    let mut found: BTreeMap<&crate::store::TripleId, (usize, &Triple)> = BTreeMap::new();
    while let Some(node) = queue.pop_front() {
        let d = dist[node];
        if d >= config.max_hops {
            continue;
        }
        for n in store.neighbors(node, &query)? {
            found.entry(&n.triple.id).or_insert((d + 1, n.triple));
            if !dist.contains_key(&n.other.id) {
                dist.insert(&n.other.id, d + 1);
                queue.push_back(&n.other.id);
            }
        }
    }
    let mut ranked: Vec<(usize, &Triple)> = found.into_values().collect();
    ranked.sort_by(|(ha, a), (hb, b)| ha.cmp(hb).then(b.confidence().total_cmp(&a.confidence())).then(a.id.cmp(&b.id)));
    ranked.truncate(config.max_triples);
    Ok(ranked.into_iter().map(|(_, t)| t).collect())
}

/// One `⟨head⟩ —[relation]→ ⟨tail⟩` line per triple, grouped under a
/// `[source: doc_id]` header per source document (groups in doc_id order,
/// input order within a group). Output stops before `max_chars` characters
/// with a notice naming how many triples were left out.
pub fn serialize_context(triples: &[&Triple], store: &GraphStore, max_chars: usize) -> String {
    let mut groups: BTreeMap<&str, Vec<&Triple>> = BTreeMap::new();
    for t in triples {
        groups.entry(t.primary_doc_id().unwrap_or("")).or_default().push(t);
    }
    fn mention<'a>(store: &'a GraphStore, id: &'a EntityId) -> &'a str {
        store.entity(id).map_or(id.0.as_str(), |e| e.canonical_mention.as_str())
    }

    let mut out = String::new();
    let mut used = 0usize;
    let mut written = 0usize;
    'groups: for (doc, ts) in &groups {
        let header = format!("[source: {}]\n", if doc.is_empty() { "unknown" } else { doc });
        let mut header_pending = Some(header);
        for t in ts {
            let display = store.schema().label_display_name(&t.relation).unwrap_or(&t.relation);
            let line = format!("⟨{}⟩ —[{}]→ ⟨{}⟩\n", mention(store, &t.head_id), display, mention(store, &t.tail_id));
            let cost = line.chars().count() + header_pending.as_ref().map_or(0, |h| h.chars().count());
            if used + cost > max_chars {
                break 'groups;
            }
            if let Some(h) = header_pending.take() {
                out.push_str(&h);
            }
            out.push_str(&line);
            used += cost;
            written += 1;
        }
    }
    if written < triples.len() {
        out.push_str(&format!("… ({} more triples omitted)\n", triples.len() - written));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::builtin_schema;
    use crate::store::{Provenance, Stage};

    fn prov(doc: &str) -> Provenance {
        Provenance::new(doc, Stage::Manual, 1.0)
    }

    #[test]
    fn linking_prefers_longest_match() {
        let mut s = GraphStore::new(builtin_schema());
        let long = s.upsert_entity("ORG", "国家林业局", prov("d")).unwrap();
        let short = s.upsert_entity("ORG", "林业局", prov("d")).unwrap();
        let doc = s.upsert_entity("DOC", "退耕还林条例", prov("d")).unwrap();
        assert_eq!(link_query("国家林业局发布了什么", &s), vec![long.clone()]);
        assert_eq!(link_query("林业局", &s), vec![short]);
        assert_eq!(link_query("退耕还林条例由国家林业局执行", &s), vec![doc, long]);
        assert!(link_query("天气如何", &s).is_empty());
    }

    #[test]
    fn isolated_seed_retrieves_nothing() {
        let mut s = GraphStore::new(builtin_schema());
        let a = s.upsert_entity("ORG", "甲", prov("d")).unwrap();
        assert!(retrieve_subgraph(&[a], &s, &RetrievalConfig::default()).unwrap().is_empty());
        let missing = EntityId("nope".into());
        assert!(retrieve_subgraph(&[missing], &s, &RetrievalConfig::default()).is_err());
    }

    #[test]
    fn one_hop_before_two_hop_and_derived_excluded() {
        let mut s = GraphStore::new(builtin_schema());
        let org = s.upsert_entity("ORG", "国家林业局", prov("d")).unwrap();
        let doc = s.upsert_entity("DOC", "条例", prov("d")).unwrap();
        let cls = s.upsert_entity("CLS", "法规", prov("d")).unwrap();
        s.insert_triple(&org, "publish", &doc, prov("d")).unwrap();
        s.insert_triple(&doc, "classifyTo", &cls, Provenance::new("d", Stage::Manual, 0.5)).unwrap();
        let cfg = RetrievalConfig { max_hops: 1, ..Default::default() };
        let one = retrieve_subgraph(std::slice::from_ref(&org), &s, &cfg).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].relation, "publish");
        let two = retrieve_subgraph(&[org], &s, &RetrievalConfig::default()).unwrap();
        assert_eq!(two.iter().map(|t| t.relation.as_str()).collect::<Vec<_>>(), vec!["publish", "classifyTo"]);
    }

    #[test]
    fn context_rendering() {
        let mut s = GraphStore::new(builtin_schema());
        let org = s.upsert_entity("ORG", "国家林业局", prov("d1")).unwrap();
        let doc = s.upsert_entity("DOC", "退耕还林条例", prov("d1")).unwrap();
        let id = s.insert_triple(&org, "publish", &doc, prov("d1")).unwrap().triple_id;
        let t = s.triple(&id).unwrap();
        assert_eq!(serialize_context(&[], &s, 100), "");
        let text = serialize_context(&[t], &s, 1000);
        assert_eq!(text, "[source: d1]\n⟨国家林业局⟩ —[Publish]→ ⟨退耕还林条例⟩\n");
        let capped = serialize_context(&[t], &s, 10);
        assert_eq!(capped, "… (1 more triples omitted)\n");
    }
}
