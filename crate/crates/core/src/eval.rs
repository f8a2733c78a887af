//! Precision / recall scoring of extracted triples against gold annotations,
//! with per entity type and per relation breakdowns.
//!
//! Matching is greedy and one-to-one, run in tiers: exact surface matches
//! first, then normalized ones, then overlap. Each tier walks gold in order
//! and takes the first unused prediction. Because a looser policy only adds
//! tiers, the matched pairs of exact mode are a subset of normalized mode's,
//! which are a subset of overlap mode's.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{OntologySchema, SignatureVerdict};
use crate::store::GraphStore;
use crate::text::strip_space_and_punct;

pub const DEFAULT_JACCARD_MIN: f64 = 0.5;

/// A triple reduced to surfaces and types, for gold annotations and for
/// predictions alike.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GoldTriple {
    pub doc_id: String,
    pub head_surface: String,
    pub head_type: String,
    pub relation: String,
    pub tail_surface: String,
    pub tail_type: String,
}

impl GoldTriple {
    /// Orders the endpoints of symmetric relations by (type, surface) so
    /// both orientations compare equal.
    pub fn canonicalize(mut self, schema: &OntologySchema) -> Self {
        let symmetric = schema.relation(&self.relation).is_some_and(|r| r.is_symmetric);
        if symmetric && (&self.tail_type, &self.tail_surface) < (&self.head_type, &self.head_surface) {
            std::mem::swap(&mut self.head_surface, &mut self.tail_surface);
            std::mem::swap(&mut self.head_type, &mut self.tail_type);
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    Exact,
    Normalized,
    Overlap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPolicy {
    pub mode: MatchMode,
    /// Minimum character-set Jaccard for overlap mode, in (0, 1].
    pub jaccard_min: f64,
}

impl Default for MatchPolicy {
    fn default() -> Self {
        MatchPolicy::normalized()
    }
}

impl MatchPolicy {
    pub fn exact() -> Self {
        MatchPolicy { mode: MatchMode::Exact, jaccard_min: 1.0 }
    }

    pub fn normalized() -> Self {
        MatchPolicy { mode: MatchMode::Normalized, jaccard_min: 1.0 }
    }

    pub fn overlap(jaccard_min: f64) -> Self {
        assert!(jaccard_min > 0.0 && jaccard_min <= 1.0, "jaccard_min must lie in (0, 1]");
        MatchPolicy { mode: MatchMode::Overlap, jaccard_min }
    }

    /// Whether two surfaces match at the given tier.
    fn tier_matches(tier: MatchMode, jaccard_min: f64, a: &str, b: &str) -> bool {
        match tier {
            MatchMode::Exact => a == b,
            MatchMode::Normalized => strip_space_and_punct(a) == strip_space_and_punct(b),
            MatchMode::Overlap => jaccard(a, b) >= jaccard_min,
        }
    }

    /// Surface match under this policy (any tier up to the mode).
    pub fn surfaces_match(&self, a: &str, b: &str) -> bool {
        self.tiers().iter().any(|t| MatchPolicy::tier_matches(*t, self.jaccard_min, a, b))
    }

    fn tiers(&self) -> &'static [MatchMode] {
        match self.mode {
            MatchMode::Exact => &[MatchMode::Exact],
            MatchMode::Normalized => &[MatchMode::Exact, MatchMode::Normalized],
            MatchMode::Overlap => &[MatchMode::Exact, MatchMode::Normalized, MatchMode::Overlap],
        }
    }
}

impl fmt::Display for MatchPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.mode {
            MatchMode::Exact => f.write_str("exact"),
            MatchMode::Normalized => f.write_str("normalized"),
            MatchMode::Overlap => write!(f, "overlap(jaccard>={})", self.jaccard_min),
        }
    }
}

impl FromStr for MatchPolicy {
    type Err = String;

    /// `exact`, `normalized`, `overlap` or `overlap:0.6`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None => match s {
                "exact" => Ok(MatchPolicy::exact()),
                "normalized" => Ok(MatchPolicy::normalized()),
                "overlap" => Ok(MatchPolicy::overlap(DEFAULT_JACCARD_MIN)),
                other => Err(format!("unknown match policy `{other}`")),
            },
            Some(("overlap", j)) => match j.parse::<f64>() {
                Ok(j) if j > 0.0 && j <= 1.0 => Ok(MatchPolicy::overlap(j)),
                _ => Err(format!("jaccard_min `{j}` must be a number in (0, 1]")),
            },
            Some(_) => Err(format!("unknown match policy `{s}`")),
        }
    }
}

/// Jaccard index of the character sets of two normalized surfaces.
pub fn jaccard(a: &str, b: &str) -> f64 {
    let a: BTreeSet<char> = strip_space_and_punct(a).chars().collect();
    let b: BTreeSet<char> = strip_space_and_punct(b).chars().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(&b).count();
    inter as f64 / (a.len() + b.len() - inter) as f64
}

fn keys_agree(p: &GoldTriple, g: &GoldTriple) -> bool {
    p.doc_id == g.doc_id && p.relation == g.relation && p.head_type == g.head_type && p.tail_type == g.tail_type
}

/// Matched (gold index, predicted index) pairs, sorted by gold index.
pub fn match_triples(predicted: &[GoldTriple], gold: &[GoldTriple], policy: &MatchPolicy) -> Vec<(usize, usize)> {
    let mut gold_used = vec![false; gold.len()];
    let mut pred_used = vec![false; predicted.len()];
    let mut pairs = Vec::new();
    for tier in policy.tiers() {
        for (gi, g) in gold.iter().enumerate() {
            if gold_used[gi] {
                continue;
            }
            let hit = predicted.iter().enumerate().position(|(pi, p)| {
                !pred_used[pi]
                    && keys_agree(p, g)
                    && MatchPolicy::tier_matches(*tier, policy.jaccard_min, &p.head_surface, &g.head_surface)
                    && MatchPolicy::tier_matches(*tier, policy.jaccard_min, &p.tail_surface, &g.tail_surface)
            });
            if let Some(pi) = hit {
                gold_used[gi] = true;
                pred_used[pi] = true;
                pairs.push((gi, pi));
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_entity_type_accuracy: BTreeMap<String, f64>,
    pub per_relation_type_accuracy: BTreeMap<String, f64>,
    pub predicted: usize,
    pub gold: usize,
    pub matched: usize,
}

impl EvalReport {
    pub fn is_empty(&self) -> bool {
        self.predicted == 0 && self.gold == 0
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision is 0 when nothing was predicted; recall is 0 when gold is empty.
pub fn score(predicted: &[GoldTriple], gold: &[GoldTriple], policy: &MatchPolicy) -> EvalReport {
    let matched = match_triples(predicted, gold, policy).len();
    let precision = ratio(matched, predicted.len());
    let recall = ratio(matched, gold.len());
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    let (per_entity_type_accuracy, per_relation_type_accuracy) = per_type_breakdown(predicted, gold, policy);
    EvalReport {
        policy: policy.to_string(),
        precision,
        recall,
        f1,
        per_entity_type_accuracy,
        per_relation_type_accuracy,
        predicted: predicted.len(),
        gold: gold.len(),
        matched,
    }
}

type Mention<'a> = (&'a str, &'a str, &'a str);

fn mentions(triples: &[GoldTriple]) -> BTreeSet<Mention<'_>> {
    triples
        .iter()
        .flat_map(|t| {
            [
                (t.doc_id.as_str(), t.head_type.as_str(), t.head_surface.as_str()),
                (t.doc_id.as_str(), t.tail_type.as_str(), t.tail_surface.as_str()),
            ]
        })
        .collect()
}

/// Entity-type accuracy counts distinct gold mentions (doc, type, surface),
/// heads and tails pooled; a mention is matched when some predicted head or
/// tail in the same document has its type and a matching surface.
/// Relation accuracy is the share of that relation's gold triples matched.
/// Types absent from gold are omitted.
pub fn per_type_breakdown(
    predicted: &[GoldTriple],
    gold: &[GoldTriple],
    policy: &MatchPolicy,
) -> (BTreeMap<String, f64>, BTreeMap<String, f64>) {
    let predicted_mentions = mentions(predicted);
    let mut entity_counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (doc, ty, surface) in mentions(gold) {
        let entry = entity_counts.entry(ty).or_default();
        entry.1 += 1;
        let hit =
            predicted_mentions.iter().any(|(pd, pt, ps)| *pd == doc && *pt == ty && policy.surfaces_match(ps, surface));
        if hit {
            entry.0 += 1;
        }
    }

    let matched_gold: BTreeSet<usize> = match_triples(predicted, gold, policy).into_iter().map(|(g, _)| g).collect();
    let mut relation_counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (gi, g) in gold.iter().enumerate() {
        let entry = relation_counts.entry(g.relation.as_str()).or_default();
        entry.1 += 1;
        if matched_gold.contains(&gi) {
            entry.0 += 1;
        }
    }
    let finish =
        |m: BTreeMap<&str, (usize, usize)>| m.into_iter().map(|(k, (n, d))| (k.to_string(), ratio(n, d))).collect();
    (finish(entity_counts), finish(relation_counts))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
    RadarData,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            "radar_data" | "radar-data" | "radar" => Ok(ReportFormat::RadarData),
            other => Err(format!("unknown report format `{other}` (text, csv, radar_data)")),
        }
    }
}

fn rows(report: &EvalReport) -> Vec<(&'static str, String, String)> {
    if report.is_empty() {
        return Vec::new();
    }
    let mut rows = vec![
        ("overall", "policy".to_string(), report.policy.clone()),
        ("overall", "precision".to_string(), report.precision.to_string()),
        ("overall", "recall".to_string(), report.recall.to_string()),
        ("overall", "f1".to_string(), report.f1.to_string()),
        ("overall", "predicted".to_string(), report.predicted.to_string()),
        ("overall", "gold".to_string(), report.gold.to_string()),
        ("overall", "matched".to_string(), report.matched.to_string()),
    ];
    for (k, v) in &report.per_entity_type_accuracy {
        rows.push(("entity_type", k.clone(), v.to_string()));
    }
    for (k, v) in &report.per_relation_type_accuracy {
        rows.push(("relation_type", k.clone(), v.to_string()));
    }
    rows
}

fn write_csv(header: [&str; 3], rows: impl IntoIterator<Item = (String, String, String)>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for (a, b, c) in rows {
        w.write_record([a, b, c]).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

/// `text` is an aligned table, `csv` one row per metric, `radar_data` one
/// (breakdown, axis, value) row per present type.
pub fn render_report(report: &EvalReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Text => {
            let rows = rows(report);
            let w0 = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max("section".len());
            let w1 = rows.iter().map(|r| r.1.chars().count()).max().unwrap_or(0).max("metric".len());
            let mut out = format!("{:<w0$}  {:<w1$}  value\n", "section", "metric");
            for (a, b, c) in rows {
                let pad = w1 - b.chars().count();
                out.push_str(&format!("{a:<w0$}  {b}{}  {c}\n", " ".repeat(pad)));
            }
            out.into_bytes()
        }
        ReportFormat::Csv => {
            write_csv(["section", "metric", "value"], rows(report).into_iter().map(|(a, b, c)| (a.to_string(), b, c)))
        }
        ReportFormat::RadarData => {
            let axes = report
                .per_entity_type_accuracy
                .iter()
                .map(|(k, v)| ("entity_type", k, v))
                .chain(report.per_relation_type_accuracy.iter().map(|(k, v)| ("relation_type", k, v)))
                .map(|(a, k, v)| (a.to_string(), k.clone(), v.to_string()));
            write_csv(["breakdown", "axis", "value"], axes)
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot read gold file {path}: {message}")]
    Unreadable { path: PathBuf, message: String },
    #[error("gold line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Parses line-delimited gold records, checking each signature.
pub fn parse_gold(text: &str, schema: &OntologySchema) -> Result<Vec<GoldTriple>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let t: GoldTriple =
            serde_json::from_str(line).map_err(|e| EvalError::Parse { line: line_no, message: e.to_string() })?;
        match schema.validate_signature(&t.head_type, &t.relation, &t.tail_type) {
            Ok(SignatureVerdict::Valid) => {}
            Ok(SignatureVerdict::Violation(v)) => {
                return Err(EvalError::Parse { line: line_no, message: v.to_string() });
            }
            Err(e) => return Err(EvalError::Parse { line: line_no, message: e.to_string() }),
        }
        out.push(t.canonicalize(schema));
    }
    Ok(out)
}

pub fn load_gold(path: &Path, schema: &OntologySchema) -> Result<Vec<GoldTriple>, EvalError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| EvalError::Unreadable { path: path.to_path_buf(), message: e.to_string() })?;
    parse_gold(&text, schema)
}

/// One record per (base triple, provenance document), in store order.
pub fn triples_from_store(store: &GraphStore) -> Vec<GoldTriple> {
    let mut out = Vec::new();
    for t in store.base_triples() {
        let (Some(h), Some(tl)) = (store.entity(&t.head_id), store.entity(&t.tail_id)) else {
            continue;
        };
        let docs: BTreeSet<&str> = t.provenance.iter().map(|p| p.doc_id.as_str()).collect();
        for doc in docs {
            out.push(
                GoldTriple {
                    doc_id: doc.to_string(),
                    head_surface: h.canonical_mention.clone(),
                    head_type: h.type_code.clone(),
                    relation: t.relation.clone(),
                    tail_surface: tl.canonical_mention.clone(),
                    tail_type: tl.type_code.clone(),
                }
                .canonicalize(store.schema()),
            );
        }
    }
    out
}
