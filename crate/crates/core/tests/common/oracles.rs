//! Independent reference implementations the library is checked against.
//! They favor obviousness over speed and share no code with the crate.

use std::collections::{BTreeMap, BTreeSet};

use forpkg_core::corpus::{PolicyDocument, PolicyMetadata};
use forpkg_core::eval::GoldTriple;
use forpkg_core::ontology::OntologySchema;
use forpkg_core::rag::RetrievalConfig;
use forpkg_core::similarity::EmbeddingProvider;
use forpkg_core::store::{EntityId, GraphStore, Triple};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive};
use rand::seq::IndexedRandom;
use rand::Rng;

use super::TYPES;

/// (relation, domain, range), typed in by hand from the ontology table.
/// `relevant` also admits DOC because document linking emits DOC pairs.
pub const SCHEMA_TABLE: [(&str, &[&str], &[&str]); 12] = [
    ("publish", &["ORG"], &["DOC"]),
    ("locate", &["ORG", "LOC"], &["LOC"]),
    ("belongTo", &["ORG"], &["ORG"]),
    ("workFor", &["PER"], &["ORG"]),
    ("duty", &["PER", "ORG", "OBJ"], &["ACT", "STATE"]),
    ("isProhibited", &["PER", "ORG", "OBJ"], &["ACT", "STATE"]),
    ("hasRight", &["PER", "ORG", "OBJ"], &["ACT", "STATE"]),
    ("define", &["CONC", "OBJ"], &["EXP_DEF"]),
    (
        "relevant",
        &["CONC", "OBJ", "EXP_DEF", "ACT", "STATE", "DOC"],
        &["CONC", "OBJ", "EXP_DEF", "ACT", "STATE", "DOC"],
    ),
    ("classifyTo", &["DOC"], &["CLS"]),
    ("cite", &["DOC"], &["DOC"]),
    ("contain", &["DOC", "LOC", "ORG", "STATE", "ACT", "CLS"], &["DOC", "LOC", "ORG", "CONC", "OBJ"]),
];

pub const INVERSES: [(&str, &str); 6] = [
    ("isPublished", "publish"),
    ("employ", "workFor"),
    ("isCited", "cite"),
    ("contain", "locate"),
    ("contain", "belongTo"),
    ("contain", "classifyTo"),
];

/// Runs every (head, relation, tail) combination through the schema and
/// returns how many were checked plus the ones where it disagrees with the table.
pub fn schema_disagreements(schema: &OntologySchema) -> (usize, Vec<(String, String, String)>) {
    let mut checked = 0;
    let mut wrong = Vec::new();
    for (rel, domain, range) in SCHEMA_TABLE {
        for h in TYPES {
            for t in TYPES {
                let expected = domain.contains(&h) && range.contains(&t);
                let valid = schema.validate_signature(h, rel, t).map(|v| v.is_valid()).unwrap_or(!expected);
                if valid != expected {
                    wrong.push((h.to_string(), rel.to_string(), t.to_string()));
                }
                checked += 1;
            }
        }
    }
    (checked, wrong)
}

/// Every component is `k / 2^20` for an integer `k`, so the vector is
/// exactly representable and dot products are exact in i128.
pub const SCALE_BITS: u32 = 20;

pub fn random_dyadic(rng: &mut impl Rng, dim: usize) -> (Vec<i64>, Vec<f64>) {
    let ints: Vec<i64> = (0..dim)
        .map(|_| {
            let bits = rng.random_range(1..=30);
            rng.random_range(-(1i64 << bits)..=(1i64 << bits))
        })
        .collect();
    let floats = ints.iter().map(|k| *k as f64 / f64::from(1u32 << SCALE_BITS)).collect();
    (ints, floats)
}

pub fn dot(a: &[i64], b: &[i64]) -> BigInt {
    BigInt::from(a.iter().zip(b).map(|(x, y)| i128::from(*x) * i128::from(*y)).sum::<i128>())
}

/// cos = dot / sqrt(|a|^2 |b|^2), evaluated with an integer square root
/// carrying 200 extra bits, so the only rounding is the final f64 cast.
pub fn exact_cosine(a: &[i64], b: &[i64]) -> f64 {
    let d = dot(a, b);
    let nn = dot(a, a) * dot(b, b);
    let shift = 200u32;
    let root = (nn << (2 * shift)).sqrt();
    let v = BigRational::new(d.abs() << shift, root).to_f64().unwrap();
    if d.is_negative() {
        -v
    } else {
        v
    }
}

pub const SENTENCES: &[&str] = &[
    "各级林业主管部门应当加强森林防火宣传教育。",
    "禁止在林区野外用火。",
    "护林员负责巡护森林资源。",
    "天然林保护修复实行分区施策。",
    "公益林的补偿标准由省级人民政府确定。",
    "采伐林木必须申请采伐许可证。",
    "林木种苗生产经营实行许可制度。",
    "退耕还林应当因地制宜。",
    "湿地保护实行总量管控。",
    "国有林场改革应当保障职工权益。",
    "古树名木实行分级保护。",
    "森林病虫害防治实行谁经营谁防治。",
    "草原禁牧区域由县级人民政府划定。",
    "野生动物栖息地应当纳入保护范围。",
    "林地征收应当依法办理审批手续。",
    "沙化土地封禁保护区内禁止开垦。",
    "林长负责组织领导责任区域森林草原资源保护发展工作。",
    "生态护林员选聘坚持公开公平。",
    "森林保险保费补贴资金专款专用。",
    "自然保护地内不得新建工业企业。",
];

/// Four clusters of near-duplicates, so pairwise similarities spread over
/// the whole [0, 1] range.
pub fn synthetic_documents(rng: &mut impl Rng, n: usize) -> Vec<PolicyDocument> {
    let clusters: Vec<Vec<&str>> = (0..4).map(|_| (0..10).map(|_| *SENTENCES.choose(rng).unwrap()).collect()).collect();
    (0..n)
        .map(|i| {
            let mut body: Vec<&str> = clusters[i % 4].clone();
            let edits = rng.random_range(0..8);
            for _ in 0..edits {
                let at = rng.random_range(0..body.len());
                body[at] = SENTENCES.choose(rng).unwrap();
            }
            PolicyDocument {
                doc_id: format!("x{i:02}"),
                title: format!("合成文件{i:02}"),
                body: body.concat(),
                metadata: PolicyMetadata::default(),
            }
        })
        .collect()
}

pub fn naive_cosine(u: &[f64], v: &[f64]) -> f64 {
    let mut uv = 0.0;
    let mut uu = 0.0;
    let mut vv = 0.0;
    for (a, b) in u.iter().zip(v) {
        uv += a * b;
        uu += a * a;
        vv += b * b;
    }
    uv / (uu.sqrt() * vv.sqrt())
}

/// All unordered document pairs scoring above `lambda`, ids in sorted order.
pub fn brute_force_edges(
    docs: &[PolicyDocument],
    provider: &dyn EmbeddingProvider,
    lambda: f64,
) -> BTreeSet<(String, String)> {
    let vectors: Vec<Vec<f64>> = docs.iter().map(|d| provider.embed(&d.body).unwrap()).collect();
    let mut out = BTreeSet::new();
    for i in 0..docs.len() {
        for j in i + 1..docs.len() {
            if naive_cosine(&vectors[i], &vectors[j]) > lambda {
                let (a, b) = (&docs[i].doc_id, &docs[j].doc_id);
                out.insert(if a < b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) });
            }
        }
    }
    out
}

/// Distances by repeated relaxation over every edge, then each reachable
/// triple ranked by (hop, confidence desc, id).
pub fn retrieval_oracle<'a>(store: &'a GraphStore, seeds: &[EntityId], config: &RetrievalConfig) -> Vec<&'a Triple> {
    let allowed = |t: &Triple| config.relation_filter.as_ref().is_none_or(|f| f.contains(&t.relation));
    let edges: Vec<&Triple> = store.base_triples().filter(|t| allowed(t)).collect();
    let mut dist: BTreeMap<&EntityId, usize> = seeds.iter().map(|s| (s, 0)).collect();
    loop {
        let mut changed = false;
        for t in &edges {
            for (a, b) in [(&t.head_id, &t.tail_id), (&t.tail_id, &t.head_id)] {
                if let Some(&da) = dist.get(a) {
                    if dist.get(b).is_none_or(|&db| da + 1 < db) {
                        dist.insert(b, da + 1);
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut ranked: Vec<(usize, &Triple)> = edges
        .iter()
        .filter_map(|t| {
            let near = [dist.get(&t.head_id), dist.get(&t.tail_id)].into_iter().flatten().min()?;
            (*near < config.max_hops).then_some((near + 1, *t))
        })
        .collect();
    ranked.sort_by(|(ha, a), (hb, b)| ha.cmp(hb).then(b.confidence().total_cmp(&a.confidence())).then(a.id.cmp(&b.id)));
    ranked.truncate(config.max_triples);
    ranked.into_iter().map(|(_, t)| t).collect()
}

pub fn gold(doc: &str, h: &str, ht: &str, rel: &str, tl: &str, tt: &str) -> GoldTriple {
    GoldTriple {
        doc_id: doc.into(),
        head_surface: h.into(),
        head_type: ht.into(),
        relation: rel.into(),
        tail_surface: tl.into(),
        tail_type: tt.into(),
    }
}

pub fn duty(doc: &str, h: &str, tl: &str) -> GoldTriple {
    gold(doc, h, "PER", "duty", tl, "ACT")
}

const EVAL_SURFACES: &[&str] = &["护林员", "林业主管部门", "开展巡护", "上报火情", "采伐许可证", "天然林", "公益林"];

/// Gold triples plus predictions that are exact copies, punctuation or
/// spacing variants, partial overlaps or unrelated.
pub fn eval_fixture(rng: &mut impl Rng, n: usize) -> (Vec<GoldTriple>, Vec<GoldTriple>) {
    let gold: Vec<GoldTriple> = (0..n)
        .map(|i| {
            let h = format!("{}{}", EVAL_SURFACES.choose(rng).unwrap(), i % 13);
            let tl = format!("{}{}", EVAL_SURFACES.choose(rng).unwrap(), EVAL_SURFACES.choose(rng).unwrap());
            duty(&format!("d{}", i % 9), &h, &tl)
        })
        .collect();
    let predicted = gold
        .iter()
        .map(|g| {
            let mut p = g.clone();
            match rng.random_range(0..5) {
                0 => {}
                1 => p.tail_surface = format!("“{}”。", p.tail_surface),
                2 => p.tail_surface = p.tail_surface.chars().skip(1).collect(),
                3 => p.head_surface = format!("{} ", p.head_surface),
                _ => p.tail_surface = "无关内容".into(),
            }
            p
        })
        .collect();
    (gold, predicted)
}
