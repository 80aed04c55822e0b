mod common;

use std::sync::Arc;

use axum::http::StatusCode;
use common::*;
use factaudit_service::ServiceConfig;
use serde_json::{json, Value};

fn without_session_id(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("session_id");
    v
}

#[tokio::test]
async fn check_all_matches_golden_report() {
    let (app, mock) = app(None);
    let id = create(&app, &summary()).await;
    let reply = call(&app, "POST", &format!("/sessions/{id}/check-all"), None).await;
    assert_eq!(reply.status, StatusCode::OK, "{}", reply.text());
    let body = reply.json();
    assert_schema("check_all", &body);
    assert_schema("report", &body);
    assert_eq!(body["session_id"], json!(id));
    let golden: Value = serde_json::from_str(include_str!("golden/check_all.json")).unwrap();
    assert_eq!(without_session_id(body), golden);
    assert_eq!(mock.stats().passes, 3);
}

#[tokio::test]
async fn cached_check_all_issues_no_backend_calls() {
    let (app, mock) = app(None);
    let id = create(&app, &summary()).await;
    call(&app, "POST", &format!("/sessions/{id}/check-all"), None).await;
    mock.reset_stats();
    let again = call(&app, "POST", &format!("/sessions/{id}/check-all"), None).await.json();
    assert_eq!(mock.stats().next_token_calls, 0);
    assert_eq!(mock.stats().completions, 0);
    assert_eq!(again["cached"], json!([true, true, true]));
    let mut golden: Value = serde_json::from_str(include_str!("golden/check_all.json")).unwrap();
    golden["cached"] = json!([true, true, true]);
    assert_eq!(without_session_id(again), golden);
}

#[tokio::test]
async fn every_endpoint_matches_its_schema() {
    let (app, _) = app(None);
    let created = call(&app, "POST", "/sessions", Some(json!({ "document": document(), "summary": summary() }))).await;
    assert_eq!(created.status, StatusCode::CREATED);
    assert_schema("session", &created.json());
    let id = created.json()["session_id"].as_str().unwrap().to_string();

    let got = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(got.status, StatusCode::OK);
    assert_schema("session", &got.json());
    assert_eq!(got.json()["sentences"].as_array().unwrap().len(), 3);
    assert!(got.json()["sentences"][0]["review"].is_null());

    let first = call(&app, "POST", &format!("/sessions/{id}/check/1"), None).await;
    assert_eq!(first.status, StatusCode::OK, "{}", first.text());
    let first = first.json();
    assert_schema("check", &first);
    assert_schema("result", &first["result"]);
    assert_eq!(first["cached"], json!(false));
    assert_eq!(first["mode"], json!("plain"));

    let second = call(&app, "POST", &format!("/sessions/{id}/check/1"), None).await.json();
    assert_eq!(second["cached"], json!(true));
    assert_eq!(second["result"], first["result"]);
    assert_eq!(second["review_index"], first["review_index"]);

    let tau = call(&app, "POST", &format!("/sessions/{id}/check/1?tau=0.5"), None).await.json();
    assert_schema("check", &tau);
    assert_eq!(tau["mode"], json!("thresholded"));
    assert_eq!(tau["cached"], json!(false));

    let verdict = call(
        &app,
        "POST",
        &format!("/sessions/{id}/verdict"),
        Some(json!({ "sentence_index": 1, "kind": "evidence", "evidence_id": 2, "verdict": "relevant" })),
    )
    .await;
    assert_eq!(verdict.status, StatusCode::OK, "{}", verdict.text());
    assert_schema("session", &verdict.json());

    let edited = call(
        &app,
        "PUT",
        &format!("/sessions/{id}/sentence/2"),
        Some(json!({ "text": "Drilling reached the water in 2012." })),
    )
    .await;
    assert_eq!(edited.status, StatusCode::OK);
    assert_schema("session", &edited.json());

    let list = call(&app, "GET", "/sessions", None).await;
    assert_schema("session_list", &list.json());
    let filtered = call(&app, "GET", "/sessions?doc_id=other", None).await.json();
    assert_eq!(filtered, json!([]));

    let export = call(&app, "GET", &format!("/sessions/{id}/annotations"), None).await;
    assert_eq!(export.status, StatusCode::OK);
    assert_eq!(export.content_type.as_deref(), Some("application/x-ndjson"));
    let lines: Vec<Value> = export.text().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    for line in &lines {
        assert_schema("annotation", line);
    }
}

#[tokio::test]
async fn error_responses_are_structured() {
    let (app, _) = app(None);
    let id = create(&app, &summary()).await;
    let cases = [
        ("GET", "/sessions/nope".to_string(), None, StatusCode::NOT_FOUND, "not_found"),
        ("POST", format!("/sessions/{id}/check/9"), None, StatusCode::NOT_FOUND, "not_found"),
        ("POST", format!("/sessions/{id}/check/x"), None, StatusCode::BAD_REQUEST, "bad_request"),
        ("POST", format!("/sessions/{id}/check/0?tau=1.5"), None, StatusCode::BAD_REQUEST, "bad_request"),
        ("POST", format!("/sessions/{id}/check/0?color=red"), None, StatusCode::BAD_REQUEST, "bad_request"),
        ("POST", format!("/sessions/{id}/check-all?mode=fast"), None, StatusCode::BAD_REQUEST, "bad_request"),
        (
            "POST",
            format!("/sessions/{id}/verdict"),
            Some(json!({ "sentence_index": 0, "kind": "edit", "edit_index": 0, "verdict": "accepted" })),
            StatusCode::NOT_FOUND,
            "not_found",
        ),
        (
            "POST",
            format!("/sessions/{id}/verdict"),
            Some(json!({ "sentence_index": 0, "kind": "new_evidence", "evidence_id": 40, "marked": true })),
            StatusCode::NOT_FOUND,
            "not_found",
        ),
        (
            "POST",
            format!("/sessions/{id}/verdict"),
            Some(json!({ "sentence_index": 0, "kind": "shrug" })),
            StatusCode::BAD_REQUEST,
            "bad_request",
        ),
        (
            "PUT",
            format!("/sessions/{id}/sentence/0"),
            Some(json!({ "text": "New text.", "expected_text": "Something else." })),
            StatusCode::CONFLICT,
            "stale_edit",
        ),
        ("PUT", format!("/sessions/{id}/sentence/0"), Some(json!({ "text": "  " })), StatusCode::BAD_REQUEST, "bad_request"),
        ("PUT", format!("/sessions/{id}/sentence/7"), Some(json!({ "text": "x" })), StatusCode::NOT_FOUND, "not_found"),
        ("GET", "/no/such/route".to_string(), None, StatusCode::NOT_FOUND, "not_found"),
        (
            "POST",
            "/sessions".to_string(),
            Some(json!({ "document": { "doc_id": "d", "sections": [] }, "summary": [] })),
            StatusCode::UNPROCESSABLE_ENTITY,
            "unprocessable",
        ),
        (
            "POST",
            "/sessions".to_string(),
            Some(json!({ "document": document(), "summary": ["a."], "summary_text": "b." })),
            StatusCode::BAD_REQUEST,
            "bad_request",
        ),
    ];
    for (method, uri, body, status, code) in cases {
        let reply = call(&app, method, &uri, body).await;
        assert_eq!(reply.status, status, "{method} {uri}: {}", reply.text());
        let body = reply.json();
        assert_schema("error", &body);
        assert_eq!(body["error"], json!(code), "{method} {uri}");
    }

    let malformed = send(&app, "POST", "/sessions", Some(b"{\"document\":".to_vec())).await;
    assert_eq!(malformed.status, StatusCode::BAD_REQUEST);
    assert_schema("error", &malformed.json());
}

#[tokio::test]
async fn oversized_payload_is_rejected() {
    let config = ServiceConfig { max_payload_bytes: 2048, ..config(None) };
    let app = app_with(config, Arc::new(mock()));
    let long = "word ".repeat(1000);
    let reply = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({ "document": { "doc_id": "big", "text": long }, "summary": [] })),
    )
    .await;
    assert_eq!(reply.status, StatusCode::PAYLOAD_TOO_LARGE);
    assert_eq!(reply.json()["error"], json!("payload_too_large"));
}

#[tokio::test]
async fn empty_summary_gives_empty_session() {
    let (app, mock) = app(None);
    let reply = call(&app, "POST", "/sessions", Some(json!({ "document": document() }))).await;
    assert_eq!(reply.status, StatusCode::CREATED);
    let id = reply.json()["session_id"].as_str().unwrap().to_string();
    assert_eq!(reply.json()["sentences"], json!([]));
    let all = call(&app, "POST", &format!("/sessions/{id}/check-all"), None).await.json();
    assert_eq!(all["sentences"], json!([]));
    assert_eq!(all["consistent"], json!(true));
    assert_eq!(mock.stats().next_token_calls, 0);
    let export = call(&app, "GET", &format!("/sessions/{id}/annotations"), None).await;
    assert_eq!(export.text(), "");
}

#[tokio::test]
async fn summary_text_is_split_into_sentences() {
    let (app, _) = app(None);
    let text = format!("{CLAIM_OK} {CLAIM_DELETE}");
    let reply = call(&app, "POST", "/sessions", Some(json!({ "document": document(), "summary_text": text }))).await;
    let texts: Vec<Value> = reply.json()["sentences"].as_array().unwrap().iter().map(|s| s["text"].clone()).collect();
    assert_eq!(texts, vec![json!(CLAIM_OK), json!(CLAIM_DELETE)]);
}

#[tokio::test]
async fn backend_outage_reports_partial_failure() {
    let backend = FailingFor { inner: mock(), claim: CLAIM_DELETE.to_string() };
    let app = app_with(config(None), Arc::new(backend));
    let id = create(&app, &summary()).await;

    let single = call(&app, "POST", &format!("/sessions/{id}/check/1"), None).await;
    assert_eq!(single.status, StatusCode::BAD_GATEWAY);
    assert_schema("error", &single.json());
    assert_eq!(single.json()["retriable"], json!(true));

    let all = call(&app, "POST", &format!("/sessions/{id}/check-all"), None).await;
    assert_eq!(all.status, StatusCode::BAD_GATEWAY);
    let body = all.json();
    assert_schema("partial_failure", &body);
    assert_eq!(body["retriable"], json!(true));
    assert_eq!(body["failed"].as_array().unwrap().len(), 1);
    assert_eq!(body["failed"][0]["index"], json!(1));
    assert!(body["partial"]["sentences"][1].is_null());
    assert_eq!(body["partial"]["sentences"][2]["revision"], json!("Drilling reached the water in 2012."));

    // successful sentences were kept and are served from cache
    let again = call(&app, "POST", &format!("/sessions/{id}/check/2"), None).await.json();
    assert_eq!(again["cached"], json!(true));
}

#[tokio::test]
async fn sessions_for_one_document_are_listed_together() {
    let (app, _) = app(None);
    let a = create(&app, &[CLAIM_OK]).await;
    let b = create(&app, &[CLAIM_REPLACE]).await;
    let list = call(&app, "GET", "/sessions?doc_id=lake-vostok", None).await.json();
    let ids: Vec<&str> = list.as_array().unwrap().iter().map(|s| s["session_id"].as_str().unwrap()).collect();
    assert_eq!(ids.len(), 2);
    assert!(ids.contains(&a.as_str()) && ids.contains(&b.as_str()));
}

#[test]
fn published_definitions_compile() {
    for name in factaudit_service::schemas::DEFINITIONS {
        let schema = factaudit_service::schemas::schema_for(name).unwrap();
        jsonschema::JSONSchema::compile(&schema).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    assert!(factaudit_service::schemas::schema_for("nothing").is_none());
}
