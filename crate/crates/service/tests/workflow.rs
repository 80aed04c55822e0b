mod common;

use axum::http::StatusCode;
use axum::Router;
use common::*;
use factaudit_core::evalkit::{aggregate_report, parse_jsonl, AnnotationRecord, MetricsReport};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

async fn check(app: &Router, id: &str, index: usize, query: &str) -> Value {
    let reply = call(app, "POST", &format!("/sessions/{id}/check/{index}{query}"), None).await;
    assert_eq!(reply.status, StatusCode::OK, "{}", reply.text());
    reply.json()
}

async fn verdict(app: &Router, id: &str, body: Value) -> crate::common::Reply {
    call(app, "POST", &format!("/sessions/{id}/verdict"), Some(body)).await
}

async fn edit_text(app: &Router, id: &str, index: usize, text: &str) -> Value {
    let reply = call(app, "PUT", &format!("/sessions/{id}/sentence/{index}"), Some(json!({ "text": text }))).await;
    assert_eq!(reply.status, StatusCode::OK, "{}", reply.text());
    reply.json()
}

#[tokio::test]
async fn accepting_a_deletion_removes_exactly_that_span() {
    let (app, _) = app(None);
    let id = create(&app, &summary()).await;
    let first = check(&app, &id, 1, "").await;
    let edit = &first["result"]["edits"][0];
    assert_eq!((edit["start"].clone(), edit["end"].clone()), (json!(5), json!(8)));

    let reply = verdict(&app, &id, json!({ "sentence_index": 1, "kind": "edit", "edit_index": 0, "verdict": "accepted" })).await;
    assert_eq!(reply.status, StatusCode::OK, "{}", reply.text());
    let sentence = &reply.json()["sentences"][1];
    assert_eq!(sentence["text"], json!(CLAIM_DELETE_FIXED));
    assert_eq!(CLAIM_DELETE.len() - CLAIM_DELETE_FIXED.len(), " by American scientists".len());
    assert_eq!(sentence["review"]["result"]["edits"][0]["status"], json!("accepted"));
    assert_eq!(sentence["review"]["stale"], json!(false));
}

#[tokio::test]
async fn rejecting_keeps_the_text() {
    let (app, _) = app(None);
    let id = create(&app, &summary()).await;
    check(&app, &id, 2, "").await;
    let reply = verdict(&app, &id, json!({ "sentence_index": 2, "kind": "edit", "edit_index": 0, "verdict": "rejected" })).await;
    let sentence = &reply.json()["sentences"][2];
    assert_eq!(sentence["text"], json!(CLAIM_REPLACE));
    assert_eq!(sentence["review"]["result"]["edits"][0]["status"], json!("rejected"));

    // a rejection leaves the text as checked, so the review still serves the cache
    let again = check(&app, &id, 2, "").await;
    assert_eq!(again["cached"], json!(true));
    assert_eq!(again["result"]["edits"][0]["status"], json!("rejected"));
}

#[tokio::test]
async fn recheck_after_accept_reflects_the_edited_sentence() {
    let (app, mock) = app(None);
    let id = create(&app, &summary()).await;
    let before = check(&app, &id, 1, "").await;
    let downstream = check(&app, &id, 2, "").await;
    assert_eq!(downstream["cached"], json!(false));

    verdict(&app, &id, json!({ "sentence_index": 1, "kind": "edit", "edit_index": 0, "verdict": "accepted" })).await;
    mock.reset_stats();
    let after = check(&app, &id, 1, "").await;
    assert_eq!(after["cached"], json!(false));
    assert_eq!(after["text"], json!(CLAIM_DELETE_FIXED));
    assert_eq!(after["result"]["claim"], json!(CLAIM_DELETE_FIXED));
    assert_eq!(after["result"]["edits"], json!([]));
    assert_eq!(after["result"]["consistent"], json!(true));
    assert_ne!(after["review_index"], before["review_index"]);
    assert_eq!(mock.stats().passes, 1);

    // the following sentence's context changed, so its result is recomputed
    let downstream = check(&app, &id, 2, "").await;
    assert_eq!(downstream["cached"], json!(false));

    // undoing the accepted edit by hand brings back the original claim; the
    // review whose edit was accepted no longer serves it
    edit_text(&app, &id, 1, CLAIM_DELETE).await;
    mock.reset_stats();
    let undone = check(&app, &id, 1, "").await;
    assert_eq!(undone["cached"], json!(false));
    assert_eq!(undone["result"]["claim"], json!(CLAIM_DELETE));
    assert_eq!(undone["result"]["edits"][0]["status"], json!("suggested"));
    assert_eq!(mock.stats().passes, 1);
}

#[tokio::test]
async fn verdict_on_a_changed_sentence_is_stale() {
    let (app, _) = app(None);
    let id = create(&app, &summary()).await;
    check(&app, &id, 1, "").await;
    edit_text(&app, &id, 1, "It was found in 1996 by American scientists.").await;
    let reply = verdict(&app, &id, json!({ "sentence_index": 1, "kind": "edit", "edit_index": 0, "verdict": "accepted" })).await;
    assert_eq!(reply.status, StatusCode::CONFLICT);
    assert_eq!(reply.json()["error"], json!("stale_edit"));

    let session = call(&app, "GET", &format!("/sessions/{id}"), None).await.json();
    assert_eq!(session["sentences"][1]["review"]["stale"], json!(true));
    assert_eq!(session["sentences"][1]["text"], json!("It was found in 1996 by American scientists."));
}

#[tokio::test]
async fn guarded_edit_detects_concurrent_change() {
    let (app, _) = app(None);
    let id = create(&app, &summary()).await;
    let body = json!({ "text": "Lake Vostok is large.", "expected_text": CLAIM_OK });
    let first = call(&app, "PUT", &format!("/sessions/{id}/sentence/0"), Some(body.clone())).await;
    assert_eq!(first.status, StatusCode::OK);
    let second = call(&app, "PUT", &format!("/sessions/{id}/sentence/0"), Some(body)).await;
    assert_eq!(second.status, StatusCode::CONFLICT);
}

/// Fresh service, no history: what the fact-checker says about `texts[index]`.
async fn uncached_result(texts: &[String], index: usize, query: &str) -> Value {
    let (app, _) = app(None);
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let id = create(&app, &refs).await;
    check(&app, &id, index, query).await["result"].clone()
}

#[tokio::test]
async fn served_results_always_match_current_text_and_tau() {
    let pool = [CLAIM_OK, CLAIM_DELETE, CLAIM_DELETE_FIXED, CLAIM_REPLACE, CLAIM_REPLACE_FIXED];
    let queries = ["", "?tau=0.3", "?tau=0.6", "?mode=low_prob_flag&tau=0.5"];
    let mut rng = StdRng::seed_from_u64(7);
    let (app, _) = app(None);
    let id = create(&app, &summary()).await;
    let mut hits = 0;
    for _ in 0..120 {
        let index = rng.gen_range(0..3);
        match rng.gen_range(0..4) {
            0 => {
                edit_text(&app, &id, index, pool[rng.gen_range(0..pool.len())]).await;
            }
            1 => {
                let kind = if rng.gen_bool(0.5) { "accepted" } else { "rejected" };
                let body = json!({ "sentence_index": index, "kind": "edit", "edit_index": 0, "verdict": kind });
                let status = verdict(&app, &id, body).await.status;
                assert!(
                    [StatusCode::OK, StatusCode::NOT_FOUND, StatusCode::CONFLICT].contains(&status),
                    "{status}"
                );
            }
            _ => {
                let query = queries[rng.gen_range(0..queries.len())];
                let served = check(&app, &id, index, query).await;
                let session = call(&app, "GET", &format!("/sessions/{id}"), None).await.json();
                let texts: Vec<String> = session["sentences"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|s| s["text"].as_str().unwrap().to_string())
                    .collect();
                assert_eq!(served["text"], json!(texts[index]));
                assert_eq!(served["result"]["claim"], json!(texts[index]));
                let expected_tau = match query {
                    "" => 0.0,
                    q => q.rsplit('=').next().unwrap().parse::<f64>().unwrap(),
                };
                assert_eq!(served["tau"], json!(expected_tau));
                let mut result = served["result"].clone();
                for e in result["edits"].as_array_mut().unwrap() {
                    e["status"] = json!("suggested");
                }
                assert_eq!(result, uncached_result(&texts, index, query).await);
                hits += usize::from(served["cached"] == json!(true));
            }
        }
    }
    assert!(hits > 0, "scenario never exercised the cache");
}

async fn annotated_session(app: &Router) -> String {
    let id = create(app, &summary()).await;
    call(app, "POST", &format!("/sessions/{id}/check-all"), None).await;
    for body in [
        json!({ "sentence_index": 1, "kind": "edit", "edit_index": 0, "verdict": "accepted" }),
        json!({ "sentence_index": 1, "kind": "evidence", "evidence_id": 2, "verdict": "relevant" }),
        json!({ "sentence_index": 1, "kind": "sufficiency", "sufficient": true }),
        json!({ "sentence_index": 2, "kind": "edit", "edit_index": 0, "verdict": "rejected" }),
    ] {
        let reply = verdict(app, &id, body).await;
        assert_eq!(reply.status, StatusCode::OK, "{}", reply.text());
    }
    id
}

#[tokio::test]
async fn annotations_round_trip_through_evaluation() {
    let (app, _) = app(None);
    let id = annotated_session(&app).await;
    let first = call(&app, "GET", &format!("/sessions/{id}/annotations"), None).await.text();
    let second = call(&app, "GET", &format!("/sessions/{id}/annotations"), None).await.text();
    assert_eq!(first, second);

    let records: Vec<AnnotationRecord> = parse_jsonl(first.as_bytes()).unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(records.iter().map(|r| r.sentence_index).collect::<Vec<_>>(), vec![1, 2]);
    for r in &records {
        r.validate().unwrap();
        assert_eq!(r.session_id, id);
        assert_eq!(r.doc_id, "lake-vostok");
    }
    assert_eq!(records[0].corrected_revision, CLAIM_DELETE_FIXED);
    assert_eq!(records[1].corrected_revision, CLAIM_REPLACE);

    let report: MetricsReport<f64> = aggregate_report(&records, None).unwrap();
    // sentence 1: 3 of 9 words deleted as suggested; sentence 2: the
    // suggested replacement of 1 of 7 words was rejected
    assert_eq!((report.error.tp, report.error.fp, report.error.fn_), (3, 1, 0));
    assert_eq!(report.error.precision, 0.75);
    assert_eq!(report.error.recall, 1.0);
    assert_eq!(report.accepted_pct, Some(50.0));
    assert_eq!(report.sufficient_pct, Some(100.0));
    assert_eq!((report.evidence.tp, report.evidence.fp, report.evidence.fn_), (2, 0, 0));
    assert_eq!(report.sentences, 2);

    let all = call(&app, "GET", "/annotations", None).await.text();
    assert_eq!(all, first);
}

#[tokio::test]
async fn invalid_sentences_export_without_verdicts() {
    let (app, _) = app(None);
    let id = annotated_session(&app).await;
    verdict(&app, &id, json!({ "sentence_index": 1, "kind": "invalid", "invalid": true })).await;
    verdict(&app, &id, json!({ "sentence_index": 0, "kind": "new_evidence", "evidence_id": 1, "marked": true })).await;
    let text = call(&app, "GET", &format!("/sessions/{id}/annotations"), None).await.text();
    let records: Vec<AnnotationRecord> = parse_jsonl(text.as_bytes()).unwrap();
    assert_eq!(records.iter().map(|r| r.sentence_index).collect::<Vec<_>>(), vec![0, 1, 2]);
    assert!(records[1].invalid);
    assert!(records[1].edit_verdicts.is_empty() && records[1].evidence_verdicts.is_empty());
    assert_eq!(records[0].new_evidence.iter().copied().collect::<Vec<_>>(), vec![1]);
    let report: MetricsReport<f64> = aggregate_report(&records, None).unwrap();
    assert_eq!(report.sentences, 2);
}

#[tokio::test]
async fn session_state_survives_restart_byte_for_byte() {
    for compact_every in [1, 3, 1000] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = || factaudit_service::ServiceConfig { compact_every, ..config(Some(dir.path())) };
        let app1 = app_with(cfg(), std::sync::Arc::new(mock()));
        let id = annotated_session(&app1).await;
        edit_text(&app1, &id, 2, "Drilling reached the water.").await;
        let other = create(&app1, &[CLAIM_OK]).await;

        let snapshot = |app: Router, id: String| async move {
            let session = call(&app, "GET", &format!("/sessions/{id}"), None).await.bytes;
            let export = call(&app, "GET", "/annotations", None).await.bytes;
            let list = call(&app, "GET", "/sessions", None).await.bytes;
            (session, export, list)
        };
        let before = snapshot(app1.clone(), id.clone()).await;
        let before_other = call(&app1, "GET", &format!("/sessions/{other}"), None).await.bytes;
        drop(app1);

        let app2 = app_with(cfg(), std::sync::Arc::new(mock()));
        let after = snapshot(app2.clone(), id.clone()).await;
        assert!(before == after, "compact_every={compact_every}");
        assert_eq!(before_other, call(&app2, "GET", &format!("/sessions/{other}"), None).await.bytes);

        // work continues on the reloaded state and survives a second restart
        let cached = check(&app2, &id, 0, "").await;
        assert_eq!(cached["cached"], json!(true));
        verdict(&app2, &id, json!({ "sentence_index": 2, "kind": "invalid", "invalid": true })).await;
        let before = snapshot(app2.clone(), id.clone()).await;
        drop(app2);
        let app3 = app_with(cfg(), std::sync::Arc::new(mock()));
        assert!(before == snapshot(app3, id.clone()).await);
    }
}
