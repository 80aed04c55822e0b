#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use factaudit_core::genbackend::{
    whitespace_tokens, BackendError, BackendQuery, Completion, GenerationBackend, MockBackend, MockScript, TokenDistribution,
};
use factaudit_service::{router, ReviewService, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

pub const CLAIM_OK: &str = "Lake Vostok is the largest lake in Antarctica.";
pub const CLAIM_DELETE: &str = "It was discovered in 1996 by American scientists.";
pub const CLAIM_DELETE_FIXED: &str = "It was discovered in 1996.";
pub const CLAIM_REPLACE: &str = "Drilling reached the water in 2013.";
pub const CLAIM_REPLACE_FIXED: &str = "Drilling reached the water in 2012.";

pub fn document() -> Value {
    json!({
        "doc_id": "lake-vostok",
        "sections": [
            { "title": null, "sentences": [
                "Lake Vostok is the largest subglacial lake in Antarctica.",
                "It lies under four kilometres of ice."
            ]},
            { "title": "Discovery", "sentences": [
                "Russian scientists confirmed the lake in 1996.",
                "Drilling reached the water in 2012."
            ]}
        ]
    })
}

pub fn summary() -> Vec<&'static str> {
    vec![CLAIM_OK, CLAIM_DELETE, CLAIM_REPLACE]
}

pub fn output_script(output: &str) -> MockScript {
    let tokens = whitespace_tokens(output);
    let steps: Vec<(&str, f64)> = tokens.iter().map(|t| (t.as_str(), 0.9)).collect();
    MockScript::new("</s>").path(&[], &steps, None)
}

/// Scripted backend for the fixture claims, including the claim as it reads
/// after accepting its deletion.
pub fn mock() -> MockBackend {
    MockBackend::new(MockScript::new("</s>"))
        .route_claim(CLAIM_OK, output_script(&format!("EVIDENCE: SENT0\nREVISION: {CLAIM_OK}")))
        .route_claim(CLAIM_DELETE, output_script("EVIDENCE: SENT2\nREVISION: It was discovered in 1996."))
        .route_claim(CLAIM_DELETE_FIXED, output_script("EVIDENCE: SENT2\nREVISION: It was discovered in 1996."))
        .route_claim(CLAIM_REPLACE, output_script("EVIDENCE: SENT3\nREVISION: Drilling reached the water in 2012."))
        .route_claim(CLAIM_REPLACE_FIXED, output_script("EVIDENCE: SENT3\nREVISION: Drilling reached the water in 2012."))
}

/// Delegates to a mock but reports the backend as unavailable for one claim.
pub struct FailingFor {
    pub inner: MockBackend,
    pub claim: String,
}

impl FailingFor {
    fn check(&self, query: &BackendQuery) -> Result<(), BackendError> {
        if query.input.text.ends_with(&format!("CLAIM: {}", self.claim)) {
            return Err(BackendError::Unavailable("scripted outage".into()));
        }
        Ok(())
    }
}

impl GenerationBackend for FailingFor {
    fn terminal(&self) -> &str {
        self.inner.terminal()
    }

    fn next_token_probs(&self, query: &BackendQuery, prefix: &[String]) -> Result<TokenDistribution, BackendError> {
        self.check(query)?;
        self.inner.next_token_probs(query, prefix)
    }

    fn greedy_complete(&self, query: &BackendQuery, prefix: &[String]) -> Result<Completion, BackendError> {
        self.check(query)?;
        self.inner.greedy_complete(query, prefix)
    }
}

/// Lets tests keep a handle on the mock's call counters.
pub struct SharedMock(pub Arc<MockBackend>);

impl GenerationBackend for SharedMock {
    fn terminal(&self) -> &str {
        self.0.terminal()
    }

    fn next_token_probs(&self, query: &BackendQuery, prefix: &[String]) -> Result<TokenDistribution, BackendError> {
        self.0.next_token_probs(query, prefix)
    }

    fn greedy_complete(&self, query: &BackendQuery, prefix: &[String]) -> Result<Completion, BackendError> {
        self.0.greedy_complete(query, prefix)
    }
}

pub fn config(data_dir: Option<&Path>) -> ServiceConfig {
    ServiceConfig { data_dir: data_dir.map(Path::to_path_buf), ..ServiceConfig::default() }
}

pub fn app_with(config: ServiceConfig, backend: Arc<dyn GenerationBackend>) -> Router {
    router(ReviewService::new(config, backend).expect("valid config"))
}

/// Router over the fixture mock plus a handle on its call counters.
pub fn app(data_dir: Option<&Path>) -> (Router, Arc<MockBackend>) {
    let mock = Arc::new(mock());
    (app_with(config(data_dir), Arc::new(SharedMock(mock.clone()))), mock)
}

pub struct Reply {
    pub status: StatusCode,
    pub content_type: Option<String>,
    pub bytes: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes)
            .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.bytes)))
    }

    pub fn text(&self) -> String {
        String::from_utf8(self.bytes.clone()).expect("utf-8 body")
    }
}

pub async fn send(app: &Router, method: &str, uri: &str, body: Option<Vec<u8>>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map(Body::from).unwrap_or_else(Body::empty)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let content_type = resp.headers().get("content-type").map(|v| v.to_str().unwrap().to_string());
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, content_type, bytes }
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> Reply {
    send(app, method, uri, body.map(|b| serde_json::to_vec(&b).unwrap())).await
}

pub async fn create(app: &Router, summary: &[&str]) -> String {
    let reply = call(app, "POST", "/sessions", Some(json!({ "document": document(), "summary": summary }))).await;
    assert_eq!(reply.status, StatusCode::CREATED, "{}", reply.text());
    reply.json()["session_id"].as_str().unwrap().to_string()
}

/// Panics with every violation when `value` does not match the named
/// definition of the published schema.
pub fn assert_schema(name: &str, value: &Value) {
    let schema = factaudit_service::schemas::schema_for(name).unwrap_or_else(|| panic!("no schema {name}"));
    let compiled = jsonschema::JSONSchema::compile(&schema).expect("schema compiles");
    let msgs: Vec<String> = match compiled.validate(value) {
        Ok(()) => Vec::new(),
        Err(errors) => errors.map(|e| format!("{} at {}", e, e.instance_path)).collect(),
    };
    assert!(msgs.is_empty(), "{name} schema violations:\n{}\n{value:#}", msgs.join("\n"));
}
