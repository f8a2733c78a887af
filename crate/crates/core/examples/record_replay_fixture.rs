//! Regenerates the replay fixture: records model transcripts for the
//! three-document corpus from a scripted stand-in model, then writes the
//! golden export of a full offline run.
//!
//! ```text
//! cargo run -p forpkg-core --example record_replay_fixture -- fixtures/replay
//! ```
//!
//! The outputs are committed and frozen; rerun only when the prompt
//! templates or the corpus change on purpose.

use std::collections::BTreeMap;
use std::path::PathBuf;

use forpkg_core::corpus::load_corpus;
use forpkg_core::extraction::{
    run_pipeline, ExtractionConfig, LlmClient, LlmError, PipelineConfig, Prompt, RecordingClient, RuleClassifier,
    RULE_TRIGGERS,
};
use forpkg_core::ontology::builtin_schema;
use forpkg_core::similarity::{EmbeddingProvider, HashNgramProvider, SimilarityConfig, DEFAULT_LAMBDA};
use forpkg_core::store::{export_graph, ExportFormat, GraphStore};

/// Head lists keyed by the first characters of each document body.
const HEADS: &[(&str, &str)] = &[
    (
        "第一条 为了加强林区防火管理，保护森林资源，制定",
        "1. 林区 | CONC\n2. 森林资源 | OBJ\n3. 县级林业主管部门 | ORG\n4. 林区经营单位 | ORG\n5. 护林员 | PER\n6. 省林业和草原局 | ORG",
    ),
    (
        "一、本方案依据",
        "天然林 | OBJ\n天然林保护区 | LOC\n县级林业主管部门 | ORG\n护林员 | PER\n退耕还林办公室 | ORG",
    ),
    (
        "第一条 为了加强林区防火管理，保护森林资源，根据",
        "[{\"surface\": \"林区\", \"type\": \"CONC\"}, {\"surface\": \"县级林业主管部门\", \"type\": \"ORG\"}, \
         {\"surface\": \"林区经营单位\", \"type\": \"ORG\"}, {\"surface\": \"护林员\", \"type\": \"PER\"}, \
         {\"surface\": \"省林业和草原局\", \"type\": \"ORG\"}]",
    ),
];

const TAIL_TYPES: &[(&str, &str)] = &[("北部山区和东部丘陵", "LOC")];

struct ScriptedModel;

impl ScriptedModel {
    /// The first cue after the head, or the first cue anywhere, widened to
    /// include a trailing 于.
    fn relation_word(segment: &str, head: &str) -> String {
        let head_end = segment.find(head).map_or(0, |i| i + head.len());
        let earliest = |from: usize| {
            RULE_TRIGGERS.iter().filter_map(|(cue, _)| segment[from..].find(cue).map(|i| (from + i, *cue))).min()
        };
        match earliest(head_end).or_else(|| earliest(0)) {
            Some((at, cue)) if segment[at + cue.len()..].starts_with('于') => format!("{cue}于"),
            Some((_, cue)) => cue.to_string(),
            None => String::new(),
        }
    }
}

impl LlmClient for ScriptedModel {
    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError> {
        let input = |k: &str| prompt.inputs[k].as_str();
        Ok(match prompt.template_id.as_str() {
            "head_entities" => HEADS
                .iter()
                .find(|(prefix, _)| input("document").starts_with(prefix))
                .map_or("NONE".to_string(), |(_, heads)| heads.to_string()),
            "relation_word" => ScriptedModel::relation_word(input("segment"), input("head")),
            "tail_type" => {
                TAIL_TYPES.iter().find(|(tail, _)| *tail == input("tail")).map_or("ACT", |(_, ty)| ty).to_string()
            }
            other => panic!("unexpected template {other}"),
        })
    }
}

fn main() {
    let dir: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "fixtures/replay".into()).into();
    let corpus = load_corpus(&dir.join("corpus")).expect("fixture corpus");
    let schema = builtin_schema();
    let recorder = RecordingClient::new(ScriptedModel);
    let provider = HashNgramProvider::default();
    let config = PipelineConfig {
        extraction: ExtractionConfig::default(),
        similarity: SimilarityConfig::new(DEFAULT_LAMBDA, provider.provider_id()),
    };
    let mut store = GraphStore::new(schema.clone());
    let rules = RuleClassifier::new(&schema);
    let report = run_pipeline(&corpus, &recorder, &rules, &provider, &config, &mut store, None).expect("pipeline");

    let mut transcripts = Vec::new();
    recorder.write_jsonl(&mut transcripts).expect("serialize transcripts");
    std::fs::write(dir.join("transcripts.jsonl"), transcripts).expect("write transcripts");
    std::fs::write(dir.join("golden.jsonl"), export_graph(&store, ExportFormat::Jsonl)).expect("write golden");

    let mut summary: BTreeMap<&str, usize> = BTreeMap::new();
    summary.insert("entities", store.entity_count());
    summary.insert("triples", store.triple_count());
    summary.insert("transcripts", recorder.records().len());
    println!("{summary:?}");
    println!("{}", serde_json::to_string_pretty(&report).expect("report"));
}
