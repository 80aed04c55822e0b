use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use factaudit_core::genbackend::{BackendError, BackendQuery, GenerationBackend, HttpBackend, HttpBackendConfig};
use factaudit_core::promptio::ModelInput;
use serde_json::{json, Value};
use tiny_http::{Header, Response, Server};

/// Answers each request with the next canned `(status, body)`; the last one repeats.
struct Stub {
    url: String,
    requests: Arc<Mutex<Vec<(String, Value)>>>,
    hits: Arc<AtomicUsize>,
}

fn stub(replies: Vec<(u16, Value)>) -> Stub {
    let server = Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    let requests = Arc::new(Mutex::new(Vec::new()));
    let hits = Arc::new(AtomicUsize::new(0));
    let (log, count) = (requests.clone(), hits.clone());
    thread::spawn(move || {
        for mut req in server.incoming_requests() {
            let mut body = String::new();
            req.as_reader().read_to_string(&mut body).unwrap();
            log.lock().unwrap().push((req.url().to_string(), serde_json::from_str(&body).unwrap_or(Value::Null)));
            let n = count.fetch_add(1, Ordering::SeqCst);
            let (status, reply) = &replies[n.min(replies.len() - 1)];
            let header = Header::from_bytes("content-type", "application/json").unwrap();
            let _ = req.respond(Response::from_string(reply.to_string()).with_status_code(*status).with_header(header));
        }
    });
    Stub { url, requests, hits }
}

fn backend(url: &str, retries: u32) -> HttpBackend {
    let mut cfg = HttpBackendConfig::new(format!("{url}/"));
    cfg.retries = retries;
    cfg.backoff = Duration::from_millis(1);
    cfg.timeout = Duration::from_secs(5);
    cfg.top_k = 2;
    HttpBackend::new(cfg)
}

fn query() -> BackendQuery {
    BackendQuery::new(ModelInput::new("DOCUMENT: SENT0 x.\nCLAIM: y.")).with_max_new_tokens(3)
}

#[test]
fn next_token_request_and_top_k() {
    let s = stub(vec![(200, json!({"top": [{"token": "b", "prob": 0.2}, {"token": "a", "prob": 0.7}, {"token": "c", "prob": 0.1}]}))]);
    let dist = backend(&s.url, 0).next_token_probs(&query(), &["p".to_string()]).unwrap();
    let tokens: Vec<&str> = dist.entries().iter().map(|e| e.token.as_str()).collect();
    assert_eq!(tokens, ["a", "b"]);
    let requests = s.requests.lock().unwrap();
    assert_eq!(requests[0].0, "/v1/next_token");
    assert_eq!(requests[0].1, json!({"input": "DOCUMENT: SENT0 x.\nCLAIM: y.", "prefix": ["p"]}));
}

#[test]
fn generate_stops_at_terminal_and_length() {
    let s = stub(vec![
        (200, json!({"tokens": ["a", "b", "</s>", "c"], "probs": [0.9, 0.8, 0.7, 0.6]})),
        (200, json!({"tokens": ["a", "b", "c", "d", "e"], "probs": [0.5, 0.5, 0.5, 0.5, 0.5]})),
    ]);
    let b = backend(&s.url, 0);
    let first = b.greedy_complete(&query(), &[]).unwrap();
    assert_eq!(first.tokens, ["a", "b"]);
    assert_eq!(first.probs, [0.9, 0.8]);
    let second = b.greedy_complete(&query(), &[]).unwrap();
    assert_eq!(second.tokens.len(), 3);
    assert_eq!(s.requests.lock().unwrap()[0].1["max_new_tokens"], json!(3));
}

#[test]
fn transient_failures_are_retried() {
    let s = stub(vec![(503, json!({})), (429, json!({})), (200, json!({"top": [{"token": "a", "prob": 1.0}]}))]);
    let dist = backend(&s.url, 3).next_token_probs(&query(), &[]).unwrap();
    assert_eq!(dist.top().unwrap().token, "a");
    assert_eq!(s.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn retries_are_bounded() {
    let s = stub(vec![(500, json!({}))]);
    let err = backend(&s.url, 2).next_token_probs(&query(), &[]).unwrap_err();
    assert!(err.is_retriable(), "{err}");
    assert_eq!(s.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let s = stub(vec![(400, json!({"error": "bad"}))]);
    let err = backend(&s.url, 3).next_token_probs(&query(), &[]).unwrap_err();
    assert!(matches!(err, BackendError::Protocol(_)), "{err}");
    assert_eq!(s.hits.load(Ordering::SeqCst), 1);

    let s = stub(vec![(413, json!({"limit": 512}))]);
    let err = backend(&s.url, 3).greedy_complete(&query(), &["a".into(), "b".into()]).unwrap_err();
    assert_eq!(err, BackendError::ContextOverflow { len: 2, limit: 512 });
}

#[test]
fn malformed_replies_are_protocol_errors() {
    let s = stub(vec![(200, json!({"tokens": ["a"], "probs": []}))]);
    assert!(matches!(backend(&s.url, 0).greedy_complete(&query(), &[]), Err(BackendError::Protocol(_))));
    let s = stub(vec![(200, json!({"nothing": true}))]);
    assert!(matches!(backend(&s.url, 0).next_token_probs(&query(), &[]), Err(BackendError::Protocol(_))));
}

#[test]
fn unreachable_server_is_retriable() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = backend(&format!("http://127.0.0.1:{port}"), 1).next_token_probs(&query(), &[]).unwrap_err();
    assert!(err.is_retriable());
}
