mod common;

use std::collections::BTreeSet;

use common::oracles::{duty, eval_fixture, gold as triple};
use std::path::PathBuf;

use forpkg_core::eval::{
    load_gold, match_triples, parse_gold, render_report, score, EvalReport, GoldTriple, MatchPolicy, ReportFormat,
};
use forpkg_core::ontology::builtin_schema;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn three_of_five_predicted_eight_gold() {
    let gold: Vec<GoldTriple> = (0..8).map(|i| duty("d1", &format!("护林员{i}"), &format!("巡护{i}"))).collect();
    let mut predicted: Vec<GoldTriple> = gold[..3].to_vec();
    predicted.push(duty("d1", "场长", "造林"));
    predicted.push(duty("d2", "护林员3", "巡护3"));
    let r = score(&predicted, &gold, &MatchPolicy::exact());
    assert_eq!((r.matched, r.predicted, r.gold), (3, 5, 8));
    assert!((r.precision - 0.6).abs() <= 1e-12);
    assert!((r.recall - 0.375).abs() <= 1e-12);
    // 2PR/(P+R) = 0.45 / 0.975
    assert!((r.f1 - 0.45 / 0.975).abs() <= 1e-12);
}

#[test]
fn four_of_five_duty_triples() {
    let mut gold: Vec<GoldTriple> = (0..5).map(|i| duty("d1", &format!("林长{i}"), &format!("督查{i}"))).collect();
    gold.push(triple("d1", "国家林业局", "ORG", "publish", "退耕还林条例", "DOC"));
    let predicted: Vec<GoldTriple> = gold[..4].to_vec();
    let r = score(&predicted, &gold, &MatchPolicy::exact());
    assert!((r.per_relation_type_accuracy["duty"] - 0.8).abs() <= 1e-12);
    assert_eq!(r.per_relation_type_accuracy["publish"], 0.0);
    // Gold mentions: 5 PER, 5 ACT, 1 ORG, 1 DOC; four of each deontic pair found.
    assert!((r.per_entity_type_accuracy["PER"] - 0.8).abs() <= 1e-12);
    assert!((r.per_entity_type_accuracy["ACT"] - 0.8).abs() <= 1e-12);
    assert_eq!(r.per_entity_type_accuracy["ORG"], 0.0);
}

#[test]
fn empty_inputs_score_zero_without_dividing() {
    let r = score(&[], &[], &MatchPolicy::default());
    assert!(r.is_empty());
    assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
    let gold = vec![duty("d1", "护林员", "巡护")];
    let r = score(&[], &gold, &MatchPolicy::default());
    assert_eq!((r.precision, r.recall), (0.0, 0.0));
    let csv = String::from_utf8(render_report(&EvalReport::default(), ReportFormat::Csv)).unwrap();
    assert_eq!(csv.trim_end(), "section,metric,value");
}

#[test]
fn policies_differ_on_punctuation_and_overlap() {
    let gold = vec![duty("d1", "护林员", "开展日常巡护、上报火情")];
    let punct = vec![duty("d1", "护林员", "开展日常巡护 上报火情。")];
    let partial = vec![duty("d1", "护林员", "开展日常巡护")];
    assert_eq!(score(&punct, &gold, &MatchPolicy::exact()).matched, 0);
    assert_eq!(score(&punct, &gold, &MatchPolicy::normalized()).matched, 1);
    assert_eq!(score(&partial, &gold, &MatchPolicy::normalized()).matched, 0);
    // 6 of 10 distinct chars shared.
    assert_eq!(score(&partial, &gold, &MatchPolicy::overlap(0.6)).matched, 1);
    assert_eq!(score(&partial, &gold, &MatchPolicy::overlap(0.61)).matched, 0);
}

#[test]
fn matching_is_one_to_one() {
    let gold = vec![duty("d1", "护林员", "巡护"), duty("d1", "护林员", "巡护")];
    let predicted = vec![duty("d1", "护林员", "巡护")];
    let r = score(&predicted, &gold, &MatchPolicy::exact());
    assert_eq!(r.matched, 1);
    assert_eq!(r.precision, 1.0);
    assert_eq!(r.recall, 0.5);
}

#[test]
fn matched_sets_nest_across_policies_on_200_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let (gold, predicted) = eval_fixture(&mut rng, 200);
    let set =
        |p: MatchPolicy| -> BTreeSet<(usize, usize)> { match_triples(&predicted, &gold, &p).into_iter().collect() };
    let exact = set(MatchPolicy::exact());
    let normalized = set(MatchPolicy::normalized());
    let overlap = set(MatchPolicy::overlap(0.5));
    assert!(exact.is_subset(&normalized));
    assert!(normalized.is_subset(&overlap));
    assert!(exact.len() < normalized.len() && normalized.len() < overlap.len());
}

#[test]
fn shipped_gold_fixture_has_expected_scale() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic/gold.jsonl");
    let gold = load_gold(&path, &builtin_schema()).unwrap();
    assert_eq!(gold.len(), 1126);
    let docs: BTreeSet<&str> = gold.iter().map(|g| g.doc_id.as_str()).collect();
    assert_eq!(docs.len(), 50);
    let r = score(&gold, &gold, &MatchPolicy::exact());
    assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
}

#[test]
fn gold_errors_name_the_line() {
    let schema = builtin_schema();
    let good = serde_json::to_string(&duty("d1", "护林员", "巡护")).unwrap();
    let bad = serde_json::to_string(&triple("d1", "护林员", "PER", "publish", "巡护", "ACT")).unwrap();
    let err = parse_gold(&format!("{good}\n\n{bad}\n"), &schema).unwrap_err();
    assert!(err.to_string().starts_with("gold line 3"), "{err}");
    let err = parse_gold("{not json", &schema).unwrap_err();
    assert!(err.to_string().starts_with("gold line 1"), "{err}");
}

#[test]
fn symmetric_gold_matches_either_orientation() {
    let schema = builtin_schema();
    let g = triple("d1", "公益林", "CONC", "relevant", "天然林", "CONC").canonicalize(&schema);
    let p = triple("d1", "天然林", "CONC", "relevant", "公益林", "CONC").canonicalize(&schema);
    assert_eq!(score(&[p], &[g], &MatchPolicy::exact()).matched, 1);
}

proptest! {
    #[test]
    fn scores_stay_in_unit_interval(seed in any::<u64>(), n in 0usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (gold, mut predicted) = eval_fixture(&mut rng, n);
        predicted.truncate(rng.random_range(0..=predicted.len()));
        for policy in [MatchPolicy::exact(), MatchPolicy::normalized(), MatchPolicy::overlap(0.5)] {
            let r = score(&predicted, &gold, &policy);
            prop_assert!(r.matched <= r.predicted.min(r.gold));
            for v in [r.precision, r.recall, r.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            for v in r.per_entity_type_accuracy.values().chain(r.per_relation_type_accuracy.values()) {
                prop_assert!((0.0..=1.0).contains(v));
            }
        }
    }
}
