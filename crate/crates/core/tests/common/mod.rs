//! Seeded random graph builders shared by the integration tests.

#![allow(dead_code)]

pub mod mock;
pub mod oracles;

use forpkg_core::extraction::Assembly;
use forpkg_core::ontology::{builtin_schema, OntologySchema};
use forpkg_core::store::{EntityId, GraphStore, Provenance, Stage};
use rand::seq::IndexedRandom;
use rand::Rng;

pub const TYPES: [&str; 10] = ["ORG", "PER", "LOC", "DOC", "CLS", "CONC", "OBJ", "EXP_DEF", "ACT", "STATE"];

/// `nodes` entities with random types and random schema-valid edges between
/// them. Confidences come from a small set so ties occur.
pub fn random_graph(rng: &mut impl Rng, nodes: usize, edges: usize) -> GraphStore {
    let schema = builtin_schema();
    let mut store = GraphStore::new(schema.clone());
    let ids: Vec<(String, EntityId)> = (0..nodes)
        .map(|i| {
            let ty = *TYPES.choose(rng).unwrap();
            let id = store
                .upsert_entity(ty, &format!("实体{i}"), Provenance::document_level(format!("g{}", i % 7)))
                .unwrap();
            (ty.to_string(), id)
        })
        .collect();
    add_random_edges(rng, &mut store, &schema, &ids, edges);
    store
}

/// Tries `attempts` random (head, relation, tail) picks and inserts the ones
/// the schema accepts. Returns how many inserts created a new triple.
pub fn add_random_edges(
    rng: &mut impl Rng,
    store: &mut GraphStore,
    schema: &OntologySchema,
    ids: &[(String, EntityId)],
    attempts: usize,
) -> usize {
    let relations: Vec<&String> = schema.relation_types.keys().collect();
    let mut created = 0;
    for _ in 0..attempts {
        let (ht, h) = ids.choose(rng).unwrap();
        let (tt, t) = ids.choose(rng).unwrap();
        let rel = relations.choose(rng).unwrap();
        if h == t || !schema.validate_signature(ht, rel, tt).unwrap().is_valid() {
            continue;
        }
        let conf = f64::from(rng.random_range(1..=5u32)) / 5.0;
        let doc = format!("g{}", rng.random_range(0..7));
        if store.insert_triple(h, rel, t, Provenance::new(doc, Stage::Manual, conf)).unwrap().created {
            created += 1;
        }
    }
    created
}

/// Inserts exactly `count` new valid triples, sampling types from the schema
/// so no attempt is wasted on invalid signatures.
pub fn random_valid_triples(rng: &mut impl Rng, store: &mut GraphStore, count: usize) {
    let schema = store.shared_schema();
    let relations: Vec<_> = schema.relation_types.values().collect();
    let mut made = 0;
    while made < count {
        let rel = relations.choose(rng).unwrap();
        let ht = rel.domain.iter().collect::<Vec<_>>().choose(rng).unwrap().to_string();
        let tt = rel.range.iter().collect::<Vec<_>>().choose(rng).unwrap().to_string();
        let prov = || Provenance::document_level("r1");
        let h = store.upsert_entity(&ht, &format!("{ht}-{}", rng.random_range(0..60)), prov()).unwrap();
        let t = store.upsert_entity(&tt, &format!("{tt}-{}", rng.random_range(0..60)), prov()).unwrap();
        if h == t {
            continue;
        }
        let conf = f64::from(rng.random_range(0..=100u32)) / 100.0;
        if store.insert_triple(&h, &rel.code, &t, Provenance::new("r1", Stage::Manual, conf)).unwrap().created {
            made += 1;
        }
    }
}

const FUZZ_TYPES: &[&str] = &["ORG", "PER", "LOC", "DOC", "CLS", "CONC", "OBJ", "EXP_DEF", "ACT", "STATE", "TREE", ""];
const FUZZ_SURFACES: &[&str] =
    &["护林员", "林场", "国家林业局", "退耕还林条例", " ", "", "公益林", "开展巡护", "湿地", "  林长 "];

/// An extraction candidate with arbitrary, often invalid, types, labels and
/// surfaces.
pub fn random_assembly(rng: &mut impl Rng, labels: &[String]) -> Assembly {
    let label = if rng.random_bool(0.05) { "grows".to_string() } else { labels.choose(rng).unwrap().clone() };
    let surface = |rng: &mut dyn rand::RngCore| {
        if rng.random_bool(0.3) {
            format!("实体{}", rng.random_range(0..40))
        } else {
            FUZZ_SURFACES.choose(rng).unwrap().to_string()
        }
    };
    Assembly {
        doc_id: format!("f{}", rng.random_range(0..5)),
        segment_index: rng.random_range(0..20),
        head_surface: surface(rng),
        head_type: FUZZ_TYPES.choose(rng).unwrap().to_string(),
        head_span: None,
        label,
        tail_surface: surface(rng),
        tail_type: FUZZ_TYPES.choose(rng).unwrap().to_string(),
        tail_span: None,
        confidence: rng.random_range(0.0..=1.0),
        note: None,
    }
}
