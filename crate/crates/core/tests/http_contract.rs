//! Remote clients against a local mock speaking the shared classifier
//! contract fixture and a chat-completions endpoint.

mod common;

use std::path::PathBuf;
use std::time::Duration;

use common::mock::MockServer;
use forpkg_core::extraction::heads::HeadEntityMention;
use forpkg_core::extraction::prompt::PromptTemplate;
use forpkg_core::extraction::{
    classify_relation, segment_text, ClassifierClient, ClassifierError, HttpClassifierClient, HttpLlmClient, LlmClient,
    LlmError, RuleClassifier,
};
use forpkg_core::ontology::builtin_schema;
use forpkg_core::remote::{JsonEndpoint, RemoteError, RetryPolicy};
use forpkg_core::similarity::{EmbeddingProvider, HttpEmbeddingProvider, ProviderError};
use forpkg_core::text::find_all;
use serde_json::{json, Value};

fn contract() -> Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/classify_contract.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn case(name: &str) -> Value {
    contract()["cases"].as_array().unwrap().iter().find(|c| c["name"] == name).cloned().unwrap()
}

fn no_retry(url: &str) -> HttpClassifierClient {
    HttpClassifierClient::new(url, &builtin_schema()).with_retry(RetryPolicy::none())
}

#[test]
fn contract_labels_are_the_schema_labels() {
    let labels: Vec<String> =
        contract()["labels"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    assert_eq!(labels, builtin_schema().relation_labels());
    assert_eq!(labels.len(), 15);
}

#[test]
fn well_formed_request_and_response() {
    let c = case("classify_well_formed");
    let server = MockServer::start(vec![(200, c["response"].to_string())]);
    let client = no_retry(&server.base_url);
    let req = &c["request"];
    let scores = client.classify(req["text"].as_str().unwrap(), req["head"].as_str().unwrap()).unwrap();
    let sent = server.join();
    assert_eq!(sent.len(), 1);
    assert_eq!((sent[0].method.as_str(), sent[0].path.as_str()), ("POST", "/classify"));
    // Exactly the two contract fields, nothing else.
    assert_eq!(sent[0].json(), *req);
    assert_eq!(scores.len(), 15);
    for (label, v) in c["response"]["scores"].as_object().unwrap() {
        assert_eq!(scores[label], v.as_f64().unwrap());
    }
}

#[test]
fn bad_request_is_a_contract_error() {
    let c = case("classify_missing_head");
    assert!(c["request"].get("head").is_none());
    assert_eq!(c["status"], 400);
    let server = MockServer::start(vec![(400, c["response"].to_string())]);
    let err = no_retry(&server.base_url).classify("文本", "头").unwrap_err();
    server.join();
    assert!(matches!(err, ClassifierError::Contract(ref m) if m.contains("400")), "{err}");
}

#[test]
fn loading_service_is_unavailable_after_retries() {
    let c = case("classify_while_loading");
    let body = c["response"].to_string();
    let server = MockServer::start(vec![(503, body.clone()), (503, body.clone()), (503, body)]);
    let retry =
        RetryPolicy { max_attempts: 3, base_delay: Duration::from_millis(5), max_delay: Duration::from_millis(10) };
    let client = HttpClassifierClient::new(&server.base_url, &builtin_schema()).with_retry(retry);
    let err = client.classify("护林员应当开展日常巡护。", "护林员").unwrap_err();
    assert_eq!(server.join().len(), 3);
    assert!(matches!(err, ClassifierError::Unavailable(_)), "{err}");
}

#[test]
fn transient_failure_then_success() {
    let ok = case("classify_well_formed")["response"].to_string();
    let server = MockServer::start(vec![(503, "{}".into()), (200, ok)]);
    let retry =
        RetryPolicy { max_attempts: 2, base_delay: Duration::from_millis(5), max_delay: Duration::from_millis(5) };
    let client = HttpClassifierClient::new(&server.base_url, &builtin_schema()).with_retry(retry);
    assert!(client.classify("甲", "乙").is_ok());
    assert_eq!(server.join().len(), 2);
}

#[test]
fn malformed_scores_break_the_contract() {
    let good = case("classify_well_formed")["response"].clone();
    let mut missing = good.clone();
    missing["scores"].as_object_mut().unwrap().remove("cite");
    let mut unnormalized = good.clone();
    unnormalized["scores"]["publish"] = json!(0.5);
    let mut bad_label = good.clone();
    bad_label["label"] = json!("grows");
    let mut out_of_range = good;
    out_of_range["scores"]["publish"] = json!(1.2);
    out_of_range["scores"]["cite"] = json!(-0.3);
    for body in [missing, unnormalized, bad_label, out_of_range, json!({"scores": {}}), json!([1, 2])] {
        let server = MockServer::start(vec![(200, body.to_string())]);
        let err = no_retry(&server.base_url).classify("甲", "乙").unwrap_err();
        server.join();
        assert!(matches!(err, ClassifierError::Contract(_)), "{body}: {err}");
    }
    let server = MockServer::start(vec![(200, "not json".into())]);
    assert!(matches!(no_retry(&server.base_url).classify("甲", "乙"), Err(ClassifierError::Contract(_))));
    server.join();
}

#[test]
fn unreachable_service_falls_back_to_rules() {
    // Bind then drop to get a port nobody listens on.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let client = no_retry(&format!("http://127.0.0.1:{port}"));
    let schema = builtin_schema();
    let rule = RuleClassifier::new(&schema);
    let seg = &segment_text("u", "国家林业局发布《退耕还林条例》。")[0];
    let head = HeadEntityMention {
        doc_id: "u".into(),
        surface: "国家林业局".into(),
        type_code: "ORG".into(),
        occurrences: find_all(&seg.text, "国家林业局"),
    };
    let c = classify_relation(seg, &head, &client, &rule, 0.35).unwrap();
    assert_eq!(c.label, "publish");
    assert!(c.fallback.unwrap().contains("unavailable"));
}

fn prompt() -> forpkg_core::extraction::Prompt {
    PromptTemplate::parse("id: probe\nversion: 1\n---\n请回答：{q}")
        .unwrap()
        .render([("q".to_string(), "林长是谁".to_string())].into_iter().collect())
        .unwrap()
}

#[test]
fn llm_client_speaks_chat_completions() {
    let reply = json!({"choices": [{"message": {"role": "assistant", "content": "林长|PER"}}]});
    let server = MockServer::start(vec![(200, reply.to_string())]);
    let endpoint = JsonEndpoint::new(format!("{}/v1/chat/completions", server.base_url), Duration::from_secs(5))
        .with_retry(RetryPolicy::none())
        .with_header("Authorization", "Bearer test-key");
    let client = HttpLlmClient::new(endpoint, "fixture-model");
    assert_eq!(client.complete(&prompt()).unwrap(), "林长|PER");
    let sent = server.join();
    assert_eq!(sent[0].path, "/v1/chat/completions");
    assert_eq!(sent[0].header("authorization"), Some("Bearer test-key"));
    let body = sent[0].json();
    assert_eq!(body["model"], "fixture-model");
    assert_eq!(body["temperature"], 0);
    assert_eq!(body["messages"][0]["content"], "请回答：林长是谁");
}

#[test]
fn llm_client_reports_malformed_and_client_errors() {
    let server = MockServer::start(vec![(200, json!({"choices": []}).to_string()), (401, "{}".into())]);
    let endpoint = JsonEndpoint::new(&server.base_url, Duration::from_secs(5)).with_retry(RetryPolicy::none());
    let client = HttpLlmClient::new(endpoint, "m");
    assert!(matches!(client.complete(&prompt()), Err(LlmError::Remote(RemoteError::Malformed(_)))));
    assert!(matches!(client.complete(&prompt()), Err(LlmError::Remote(RemoteError::Status { code: 401, .. }))));
    server.join();
}

#[test]
fn embedding_provider_checks_dimension() {
    let server = MockServer::start(vec![
        (200, json!({"vector": [0.5, 0.25, 0.0]}).to_string()),
        (200, json!({"vector": [1.0]}).to_string()),
    ]);
    let endpoint = JsonEndpoint::new(&server.base_url, Duration::from_secs(5)).with_retry(RetryPolicy::none());
    let provider = HttpEmbeddingProvider::with_endpoint(endpoint, 3, "remote-3");
    assert_eq!(provider.embed("森林").unwrap(), vec![0.5, 0.25, 0.0]);
    assert!(matches!(provider.embed("森林"), Err(ProviderError::WrongDim { expected: 3, got: 1 })));
    let sent = server.join();
    assert_eq!(sent[0].json(), json!({"text": "森林"}));
}
