//! Regenerates the synthetic scale fixtures under `fixtures/synthetic/`:
//! a 500-entity / 1,126-triple graph export and the matching 50-document
//! gold annotation file. Content is random but seeded, so reruns are
//! byte-identical.
//!
//!     cargo run -p forpkg-core --example gen_synthetic [OUT_DIR]

use std::collections::BTreeSet;
use std::path::PathBuf;

use forpkg_core::eval::triples_from_store;
use forpkg_core::ontology::builtin_schema;
use forpkg_core::store::{export_graph, EntityId, ExportFormat, GraphStore, Provenance, Stage};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 1126;
const DOCS: usize = 50;
const PER_TYPE: usize = 50;
const TRIPLES: usize = 1126;

const PLACES: &[&str] = &[
    "北川", "南岭", "东坡", "西山", "青河", "白石", "黑松", "红柳", "金沙", "银杏", "松溪", "柏林", "杉坪", "桦甸",
    "榆树",
];

fn stems(type_code: &str) -> &'static [&'static str] {
    match type_code {
        "ORG" => &["林业局", "自然资源局", "林场", "保护站", "森林公安局", "草原站"],
        "PER" => &["护林员", "林长", "场长", "站长", "检疫员", "监理员"],
        "LOC" => &["县", "自然保护区", "国有林区", "湿地公园", "流域", "林班"],
        "CLS" => &["生态保护类", "资源管理类", "防灾减灾类", "产业发展类", "执法监督类"],
        "CONC" => &["公益林", "天然林", "生态效益补偿", "林地保有量", "森林覆盖率", "退耕还林"],
        "OBJ" => &["采伐许可证", "林木种苗", "防火设施", "野生植物", "林区道路", "检疫证书"],
        "EXP_DEF" => &[
            "以保护生态为主要目的的林地",
            "依法划定并严格管护的区域",
            "按规定程序审批的作业",
            "具有特定生态功能的植被",
        ],
        "ACT" => &["开展巡护", "上报火情", "组织造林", "实施检疫", "擅自采伐", "编制规划"],
        "STATE" => &["保持林地用途不变", "处于封育状态", "符合防火标准", "达到验收要求"],
        _ => &["事项"],
    }
}

fn surfaces(type_code: &str, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    while out.len() < PER_TYPE {
        let place = PLACES.choose(rng).unwrap();
        let stem = stems(type_code).choose(rng).unwrap();
        let n: u32 = rng.random_range(1..=99);
        let surface = match type_code {
            "EXP_DEF" | "ACT" | "STATE" => format!("{place}片区{stem}（第{n}项）"),
            _ => format!("{place}{stem}{n:02}"),
        };
        if seen.insert(surface.clone()) {
            out.push(surface);
        }
    }
    out
}

fn main() {
    let out_dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic"));
    let schema = builtin_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut store = GraphStore::new(schema.clone());

    let doc_ids: Vec<String> = (1..=DOCS).map(|i| format!("s{i:03}")).collect();
    let mut pools: Vec<(String, Vec<EntityId>)> = Vec::new();
    for ty in schema.entity_types.keys() {
        let names: Vec<String> = if ty == "DOC" {
            doc_ids
                .iter()
                .enumerate()
                .map(|(i, d)| format!("{}林业管理规定（{d}）", PLACES[i % PLACES.len()]))
                .collect()
        } else {
            surfaces(ty, &mut rng)
        };
        let ids = names
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let origin = Provenance::document_level(doc_ids[i % DOCS].clone());
                store.upsert_entity(ty, name, origin).expect("synthetic entity")
            })
            .collect();
        pools.push((ty.clone(), ids));
    }
    let pool = |ty: &str| &pools.iter().find(|(t, _)| t == ty).expect("pool").1;

    let relations: Vec<_> = schema.relation_types.values().collect();
    let mut inserted = 0;
    while inserted < TRIPLES {
        let rel = relations.choose(&mut rng).unwrap();
        let head_ty = rel.domain.iter().collect::<Vec<_>>().choose(&mut rng).unwrap().to_string();
        let tail_ty = rel.range.iter().collect::<Vec<_>>().choose(&mut rng).unwrap().to_string();
        let head = pool(&head_ty).choose(&mut rng).unwrap().clone();
        let tail = pool(&tail_ty).choose(&mut rng).unwrap().clone();
        // Each triple gets exactly one document, so skip repeats.
        if head == tail || store.find_triple(&head, &rel.code, &tail).is_some() {
            continue;
        }
        let doc = doc_ids[inserted % DOCS].clone();
        let confidence = f64::from(rng.random_range(50..=100u32)) / 100.0;
        let stage = if rel.code == "relevant" { Stage::Similarity } else { Stage::Manual };
        store
            .insert_triple(&head, &rel.code, &tail, Provenance::new(doc, stage, confidence))
            .expect("synthetic triple is schema-valid");
        inserted += 1;
    }
    assert_eq!(store.entity_count(), PER_TYPE * schema.entity_types.len());
    assert_eq!(store.triple_count(), TRIPLES);

    std::fs::create_dir_all(&out_dir).expect("create output dir");
    std::fs::write(out_dir.join("graph.jsonl"), export_graph(&store, ExportFormat::Jsonl)).expect("write graph");
    let mut gold = String::new();
    for t in triples_from_store(&store) {
        gold.push_str(&serde_json::to_string(&t).expect("gold record"));
        gold.push('\n');
    }
    std::fs::write(out_dir.join("gold.jsonl"), gold).expect("write gold");
    println!("wrote {} entities, {} triples to {}", store.entity_count(), store.triple_count(), out_dir.display());
}
