//! Relation classifier clients.
//!
//! A classifier maps (segment text, head surface) to a distribution over
//! every relation label of the schema. The HTTP client speaks the
//! `/classify` contract of the external classifier service; the rule
//! classifier is the offline fallback.

use std::collections::BTreeMap;
use std::time::Duration;

use serde_json::json;
use thiserror::Error;

use crate::ontology::OntologySchema;
use crate::remote::{JsonEndpoint, RemoteError, RetryPolicy};
use crate::text::char_len;

pub const CLASSIFIER_ENDPOINT_ENV: &str = "FORPKG_CLASSIFIER_ENDPOINT";
pub const SCORE_SUM_TOLERANCE: f64 = 1e-6;

/// Score given to the matched label by the rule classifier.
pub const RULE_WINNER_SCORE: f64 = 0.9;
/// Score given to `relevant` when no trigger matches.
pub const RULE_DEFAULT_SCORE: f64 = 0.1;

pub type Scores = BTreeMap<String, f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifierError {
    #[error("classifier unavailable: {0}")]
    Unavailable(String),
    #[error("classifier response violates the contract: {0}")]
    Contract(String),
}

pub trait ClassifierClient: Send + Sync {
    fn classify(&self, text: &str, head: &str) -> Result<Scores, ClassifierError>;
}

/// Cue words and the label each selects. Matched by earliest position in
/// the segment; at equal positions the longer cue wins.
pub const RULE_TRIGGERS: &[(&str, &str)] = &[
    ("发布", "publish"),
    ("位于", "locate"),
    ("禁止", "isProhibited"),
    ("有权", "hasRight"),
    ("应当", "duty"),
    ("负责", "duty"),
    ("是指", "define"),
    ("系指", "define"),
    ("引用", "cite"),
    ("任职", "workFor"),
    ("属于", "belongTo"),
    ("包括", "contain"),
    ("包含", "contain"),
    ("分类", "classifyTo"),
];

#[derive(Debug, Clone)]
pub struct RuleClassifier {
    labels: Vec<String>,
    triggers: Vec<(String, String)>,
}

impl RuleClassifier {
    /// Keeps only triggers whose label the schema knows.
    pub fn new(schema: &OntologySchema) -> Self {
        let labels = schema.relation_labels();
        let triggers = RULE_TRIGGERS
            .iter()
            .filter(|(_, label)| labels.iter().any(|l| l == label))
            .map(|(w, l)| (w.to_string(), l.to_string()))
            .collect();
        RuleClassifier { labels, triggers }
    }

    /// The earliest trigger in `text` as (char position, cue, label).
    pub fn find_trigger(&self, text: &str) -> Option<(usize, &str, &str)> {
        let mut best: Option<(usize, usize, &str, &str)> = None;
        for (cue, label) in &self.triggers {
            if let Some(byte) = text.find(cue.as_str()) {
                let pos = text[..byte].chars().count();
                let len = char_len(cue);
                let better = match best {
                    None => true,
                    Some((p, l, _, _)) => pos < p || (pos == p && len > l),
                };
                if better {
                    best = Some((pos, len, cue, label));
                }
            }
        }
        best.map(|(pos, _, cue, label)| (pos, cue, label))
    }

    fn distribution(&self, winner: Option<&str>) -> Scores {
        let n = self.labels.len();
        if n == 0 {
            return Scores::new();
        }
        let (label, top) = match winner {
            Some(l) => (Some(l), RULE_WINNER_SCORE),
            None if self.labels.iter().any(|l| l == "relevant") => (Some("relevant"), RULE_DEFAULT_SCORE),
            None => (None, 0.0),
        };
        let Some(label) = label.filter(|_| n > 1) else {
            return self.labels.iter().map(|l| (l.clone(), 1.0 / n as f64)).collect();
        };
        let rest = (1.0 - top) / (n - 1) as f64;
        self.labels.iter().map(|l| (l.clone(), if l == label { top } else { rest })).collect()
    }
}

impl ClassifierClient for RuleClassifier {
    fn classify(&self, text: &str, _head: &str) -> Result<Scores, ClassifierError> {
        let winner = self.find_trigger(text).map(|(_, _, label)| label);
        Ok(self.distribution(winner))
    }
}

/// Checks a score map against the label set: every label present, no
/// extras, values in [0, 1], sum within tolerance of 1.
pub fn check_scores(scores: &Scores, labels: &[String]) -> Result<(), ClassifierError> {
    if scores.len() != labels.len() || labels.iter().any(|l| !scores.contains_key(l)) {
        return Err(ClassifierError::Contract(format!(
            "expected scores for {} labels, got {:?}",
            labels.len(),
            scores.keys().collect::<Vec<_>>()
        )));
    }
    if let Some((l, v)) = scores.iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(ClassifierError::Contract(format!("score for {l} is {v}")));
    }
    let sum: f64 = scores.values().sum();
    if (sum - 1.0).abs() > SCORE_SUM_TOLERANCE {
        return Err(ClassifierError::Contract(format!("scores sum to {sum}")));
    }
    Ok(())
}

/// Client for `POST {base}/classify` with body `{"text", "head"}` and reply
/// `{"label", "scores"}`.
pub struct HttpClassifierClient {
    endpoint: JsonEndpoint,
    labels: Vec<String>,
}

impl HttpClassifierClient {
    pub fn new(base_url: &str, schema: &OntologySchema) -> Self {
        let endpoint = JsonEndpoint::new(base_url, Duration::from_secs(30)).join("classify");
        HttpClassifierClient { endpoint, labels: schema.relation_labels() }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.endpoint = self.endpoint.with_retry(retry);
        self
    }

    pub fn from_env(schema: &OntologySchema) -> Result<Self, ClassifierError> {
        let url = std::env::var(CLASSIFIER_ENDPOINT_ENV)
            .map_err(|_| ClassifierError::Unavailable(format!("{CLASSIFIER_ENDPOINT_ENV} is not set")))?;
        Ok(HttpClassifierClient::new(&url, schema))
    }

    pub fn url(&self) -> &str {
        self.endpoint.url()
    }
}

impl ClassifierClient for HttpClassifierClient {
    fn classify(&self, text: &str, head: &str) -> Result<Scores, ClassifierError> {
        let reply = self.endpoint.post(&json!({"text": text, "head": head})).map_err(|e| match e {
            RemoteError::Status { code, body } if (400..500).contains(&code) && code != 429 => {
                ClassifierError::Contract(format!("HTTP {code}: {body}"))
            }
            RemoteError::Malformed(m) => ClassifierError::Contract(m),
            other => ClassifierError::Unavailable(other.to_string()),
        })?;
        let label = reply
            .get("label")
            .and_then(|v| v.as_str())
            .ok_or_else(|| ClassifierError::Contract("missing `label`".into()))?;
        let scores: Scores = reply
            .get("scores")
            .and_then(|v| v.as_object())
            .ok_or_else(|| ClassifierError::Contract("missing `scores`".into()))?
            .iter()
            .map(|(k, v)| {
                v.as_f64()
                    .map(|x| (k.clone(), x))
                    .ok_or_else(|| ClassifierError::Contract(format!("score for {k} is not a number")))
            })
            .collect::<Result<_, _>>()?;
        check_scores(&scores, &self.labels)?;
        if !self.labels.iter().any(|l| l == label) {
            return Err(ClassifierError::Contract(format!("unknown label `{label}`")));
        }
        Ok(scores)
    }
}
