//! The builtin schema checked against a separately transcribed relation
//! table, over every (head type, relation, tail type) combination.

mod common;

use common::oracles::{schema_disagreements, INVERSES, SCHEMA_TABLE as TABLE};
use common::TYPES;
use forpkg_core::ontology::{builtin_schema, OntologyError, Role, SignatureVerdict, ViolatedSide};

#[test]
fn all_1200_combinations_agree_with_table() {
    let schema = builtin_schema();
    let (checked, disagreements) = schema_disagreements(&schema);
    assert_eq!(checked, 1200);
    assert!(disagreements.is_empty(), "{disagreements:?}");
    for (rel, domain, range) in TABLE {
        for h in TYPES {
            for t in TYPES {
                if let SignatureVerdict::Violation(v) = schema.validate_signature(h, rel, t).unwrap() {
                    let side = match (domain.contains(&h), range.contains(&t)) {
                        (false, true) => ViolatedSide::Domain,
                        (true, false) => ViolatedSide::Range,
                        _ => ViolatedSide::Both,
                    };
                    assert_eq!(v.side, side, "{h} {rel} {t}");
                }
            }
        }
    }
}

#[test]
fn schema_has_exactly_the_table_entries() {
    let schema = builtin_schema();
    let types: Vec<&str> = schema.entity_types.keys().map(String::as_str).collect();
    let mut expected = TYPES.to_vec();
    expected.sort_unstable();
    assert_eq!(types, expected);
    let mut rels: Vec<&str> = TABLE.iter().map(|(r, _, _)| *r).collect();
    rels.sort_unstable();
    assert_eq!(schema.relation_types.keys().map(String::as_str).collect::<Vec<_>>(), rels);
    assert_eq!(schema.relation_labels().len(), 15);
}

#[test]
fn deontic_and_symmetric_flags() {
    let schema = builtin_schema();
    for rel in schema.relation_types.values() {
        assert_eq!(rel.is_deontic, ["duty", "isProhibited", "hasRight"].contains(&rel.code.as_str()), "{}", rel.code);
        assert_eq!(rel.is_symmetric, rel.code == "relevant", "{}", rel.code);
    }
}

#[test]
fn inverse_labels_swap_roles() {
    let schema = builtin_schema();
    for (inverse, forward) in INVERSES {
        let (domain, range) = TABLE.iter().find(|(r, _, _)| *r == forward).map(|(_, d, r)| (*d, *r)).unwrap();
        // The inverse label reads tail-first: its head is from the range.
        let n = schema.normalize_relation(range[0], inverse, domain[0]).unwrap();
        if inverse == "contain" {
            // `contain` is also a forward relation in its own right.
            assert_eq!(n.relation, "contain");
            continue;
        }
        assert_eq!(n.relation, forward);
        assert_eq!((n.head_role, n.tail_role), (Role::Tail, Role::Head));
        assert_eq!((n.head_type.as_str(), n.tail_type.as_str()), (domain[0], range[0]));
    }
    assert!(matches!(
        schema.normalize_relation("DOC", "isPublished", "DOC"),
        Err(OntologyError::SignatureViolation(_))
    ));
}

#[test]
fn unknown_codes_are_errors_not_verdicts() {
    let schema = builtin_schema();
    assert!(matches!(schema.validate_signature("ORG", "owns", "DOC"), Err(OntologyError::UnknownRelationType(_))));
    assert!(matches!(schema.validate_signature("TREE", "publish", "DOC"), Err(OntologyError::UnknownEntityType(_))));
    assert!(matches!(schema.validate_signature("ORG", "publish", "tree"), Err(OntologyError::UnknownEntityType(_))));
}
