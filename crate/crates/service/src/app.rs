use std::collections::HashMap;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use factaudit_core::auditor::{
    fact_check_sentence, prepare_document, AuditError, AuditReport, DecodingConfig, DecodingMode, FactCheckResult,
};
use factaudit_core::evalkit::AnnotationRecord;
use factaudit_core::genbackend::{GenerationBackend, HttpBackend, HttpBackendConfig, MockScript};
use factaudit_core::promptio::{LexicalOverlap, PromptTemplate, TruncationOptions};
use factaudit_core::textmodel::{split_sentences, ClaimContext, Document, DocumentRecord};
use serde::Deserialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use tokio::sync::{Mutex, RwLock};
use tokio::task::JoinHandle;
use tracing::{info, warn};

use crate::config::ServiceConfig;
use crate::error::{FailedSentence, PartialFailure, ServiceError};
use crate::persist::Persistence;
use crate::session::{Event, Review, SentenceState, Session, Verdict};
use crate::views::CheckView;

/// Decoding overrides for one check request. A `tau` without a `mode` turns
/// plain decoding into thresholded decoding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckOverrides {
    pub tau: Option<f64>,
    pub mode: Option<DecodingMode>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub document: DocumentRecord,
    /// Generated text, one sentence per entry.
    #[serde(default)]
    pub summary: Option<Vec<String>>,
    /// Generated text as one string, split into sentences by the service.
    #[serde(default)]
    pub summary_text: Option<String>,
}

struct Slot {
    session: Session,
    seq: u64,
    uncompacted: usize,
}

struct Inner {
    config: ServiceConfig,
    template: PromptTemplate,
    backend: Arc<dyn GenerationBackend>,
    store: Option<Persistence>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Slot>>>>,
}

/// Session store and fact-check orchestration behind the HTTP API. Each
/// session is guarded by its own lock; different sessions never block each
/// other.
#[derive(Clone)]
pub struct ReviewService {
    inner: Arc<Inner>,
}

struct CheckJob {
    document: Document,
    preceding: Vec<String>,
    text: String,
    cfg: DecodingConfig,
    template: PromptTemplate,
    budget: usize,
    hard_truncate: bool,
    backend: Arc<dyn GenerationBackend>,
}

impl CheckJob {
    fn run(self) -> Result<(FactCheckResult, Vec<String>), AuditError> {
        let ctx = ClaimContext::new(self.preceding, self.text)?;
        let truncation = prepare_document(
            &self.document,
            &ctx,
            &self.template,
            self.budget,
            &LexicalOverlap::default(),
            TruncationOptions { hard_truncate: self.hard_truncate },
        )?;
        let result = fact_check_sentence(&truncation.document, &ctx, &self.template, &self.cfg, self.backend.as_ref())?;
        Ok((result, truncation.warnings))
    }
}

/// Builds the configured backend: the mock script when set, else the HTTP
/// client.
pub fn backend_from_config(config: &ServiceConfig) -> Result<Arc<dyn GenerationBackend>, ServiceError> {
    if let Some(path) = &config.mock_script {
        let mock = MockScript::load(path).map_err(|e| ServiceError::BadRequest(format!("mock script: {e}")))?;
        return Ok(Arc::new(mock));
    }
    match &config.backend_url {
        Some(url) => Ok(Arc::new(HttpBackend::new(HttpBackendConfig::new(url.clone())))),
        None => Err(ServiceError::BadRequest("no backend_url or mock_script configured".into())),
    }
}

pub fn cache_key(text: &str, preceding: &[String], cfg: &DecodingConfig, template: &PromptTemplate) -> String {
    let material = serde_json::json!([text, preceding, cfg.tau, template.instruction, cfg.mode]);
    let digest = Sha256::digest(material.to_string().as_bytes());
    format!("{digest:x}")
}

fn now_millis() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// A review that can serve `key` for the sentence as it currently reads.
/// Reviews whose accepted edits changed the text no longer qualify.
fn cached_review(s: &SentenceState, key: &str) -> Option<usize> {
    s.reviews.iter().rposition(|r| r.cache_key == key && r.expected_text() == s.text)
}

impl ReviewService {
    pub fn new(config: ServiceConfig, backend: Arc<dyn GenerationBackend>) -> Result<Self, ServiceError> {
        config.validate()?;
        let template = match &config.template_path {
            Some(path) => PromptTemplate::load(path).map_err(|e| ServiceError::BadRequest(e.to_string()))?,
            None => PromptTemplate::default(),
        };
        let store = config.data_dir.as_ref().map(Persistence::open).transpose()?;
        let mut sessions = HashMap::new();
        if let Some(store) = &store {
            for loaded in store.load_all()? {
                sessions.insert(
                    loaded.session.session_id.clone(),
                    Arc::new(Mutex::new(Slot {
                        session: loaded.session,
                        seq: loaded.seq,
                        uncompacted: loaded.uncompacted,
                    })),
                );
            }
            info!(sessions = sessions.len(), root = %store.root().display(), "loaded sessions");
        }
        Ok(Self {
            inner: Arc::new(Inner { config, template, backend, store, sessions: RwLock::new(sessions) }),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    async fn slot(&self, session_id: &str) -> Result<Arc<Mutex<Slot>>, ServiceError> {
        self.inner
            .sessions
            .read()
            .await
            .get(session_id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("session {session_id}")))
    }

    /// Applies `event`, appends it to the log and compacts when due. State
    /// changes only after the event is durable.
    fn commit(&self, slot: &mut Slot, event: Event) -> Result<(), ServiceError> {
        let mut next = slot.session.clone();
        next.apply(&event)?;
        if let Some(store) = &self.inner.store {
            store.append(&next.session_id, slot.seq + 1, &event)?;
        }
        slot.seq += 1;
        slot.session = next;
        slot.uncompacted += 1;
        if let Some(store) = &self.inner.store {
            if slot.uncompacted >= self.inner.config.compact_every {
                store.compact(&slot.session, slot.seq)?;
                slot.uncompacted = 0;
            }
        }
        Ok(())
    }

    pub fn effective_config(&self, overrides: CheckOverrides) -> Result<DecodingConfig, ServiceError> {
        let mut cfg = self.inner.config.decoding.clone();
        if let Some(mode) = overrides.mode {
            cfg.mode = mode;
        }
        if let Some(tau) = overrides.tau {
            cfg.tau = tau;
            if overrides.mode.is_none() && cfg.mode == DecodingMode::Plain {
                cfg.mode = DecodingMode::Thresholded;
            }
        }
        cfg.validate().map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        Ok(cfg)
    }

    pub async fn create(&self, request: CreateSession) -> Result<Session, ServiceError> {
        let summary = match (request.summary, request.summary_text) {
            (Some(_), Some(_)) => {
                return Err(ServiceError::BadRequest("give either summary or summary_text, not both".into()))
            }
            (Some(list), None) => list,
            (None, Some(text)) => split_sentences(&text),
            (None, None) => Vec::new(),
        };
        if let Some(i) = summary.iter().position(|s| s.trim().is_empty()) {
            return Err(ServiceError::BadRequest(format!("summary sentence {i} is empty")));
        }
        let document = request.document.into_document().map_err(|e| ServiceError::Unprocessable(e.to_string()))?;
        let session_id = uuid::Uuid::new_v4().simple().to_string();
        let created = Event::Created { session_id: session_id.clone(), document, sentences: summary, at: now_millis() };
        let session = Session::from_created(&created)?;
        if let Some(store) = &self.inner.store {
            store.append(&session_id, 1, &created)?;
        }
        let out = session.clone();
        let slot = Slot { session, seq: 1, uncompacted: 1 };
        self.inner.sessions.write().await.insert(session_id, Arc::new(Mutex::new(slot)));
        Ok(out)
    }

    pub async fn get(&self, session_id: &str) -> Result<Session, ServiceError> {
        Ok(self.slot(session_id).await?.lock().await.session.clone())
    }

    /// All sessions ordered by creation time, optionally only those of one
    /// document.
    pub async fn list(&self, doc_id: Option<&str>) -> Vec<Session> {
        let slots: Vec<_> = self.inner.sessions.read().await.values().cloned().collect();
        let mut out = Vec::with_capacity(slots.len());
        for slot in slots {
            let session = slot.lock().await.session.clone();
            if doc_id.is_none_or(|d| session.document.doc_id() == d) {
                out.push(session);
            }
        }
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.session_id.cmp(&b.session_id)));
        out
    }

    fn job(&self, session: &Session, index: usize, cfg: &DecodingConfig) -> CheckJob {
        CheckJob {
            document: session.document.clone(),
            preceding: session.preceding(index),
            text: session.sentences[index].text.clone(),
            cfg: cfg.clone(),
            template: self.inner.template.clone(),
            budget: self.inner.config.input_budget,
            hard_truncate: self.inner.config.hard_truncate,
            backend: self.inner.backend.clone(),
        }
    }

    fn spawn(job: CheckJob) -> JoinHandle<Result<(FactCheckResult, Vec<String>), AuditError>> {
        tokio::task::spawn_blocking(move || job.run())
    }

    /// Serves a cached review when one matches the current text and
    /// settings, otherwise runs the fact-checker.
    pub async fn check(&self, session_id: &str, index: usize, overrides: CheckOverrides) -> Result<CheckView, ServiceError> {
        let cfg = self.effective_config(overrides)?;
        let slot = self.slot(session_id).await?;
        let mut slot = slot.lock().await;
        let sentence = slot.session.sentence(index)?;
        let key = cache_key(&sentence.text, &slot.session.preceding(index), &cfg, &self.inner.template);
        if let Some(i) = cached_review(sentence, &key) {
            if sentence.current != Some(i) {
                self.commit(&mut slot, Event::Selected { index, review: i, at: now_millis() })?;
            }
            return Ok(CheckView::new(&slot.session, index, true));
        }
        let job = self.job(&slot.session, index, &cfg);
        let text = job.text.clone();
        let (result, warnings) = Self::spawn(job)
            .await
            .map_err(|e| ServiceError::Backend { message: format!("check task failed: {e}"), retriable: false })?
            .map_err(|e| ServiceError::from(e.at_sentence(index)))?;
        let review = Review {
            cache_key: key,
            base_text: text,
            tau: cfg.tau,
            mode: cfg.mode,
            result,
            evidence_verdicts: Vec::new(),
            warnings,
        };
        self.commit(&mut slot, Event::Reviewed { index, review: Box::new(review), at: now_millis() })?;
        Ok(CheckView::new(&slot.session, index, false))
    }

    /// Checks every sentence with the current preceding text as context.
    /// Uncached sentences run concurrently. Successful results are kept even
    /// when others fail.
    pub async fn check_all(&self, session_id: &str, overrides: CheckOverrides) -> Result<Value, ServiceError> {
        let cfg = self.effective_config(overrides)?;
        let slot = self.slot(session_id).await?;
        let mut slot = slot.lock().await;
        let n = slot.session.sentences.len();
        let mut keys = Vec::with_capacity(n);
        let mut pending = Vec::with_capacity(n);
        for index in 0..n {
            let session = &slot.session;
            let key = cache_key(&session.sentences[index].text, &session.preceding(index), &cfg, &self.inner.template);
            let task = match cached_review(&session.sentences[index], &key) {
                Some(i) => Err(i),
                None => Ok((session.sentences[index].text.clone(), Self::spawn(self.job(session, index, &cfg)))),
            };
            keys.push(key);
            pending.push(task);
        }

        let mut results: Vec<Option<FactCheckResult>> = vec![None; n];
        let mut cached = vec![false; n];
        let mut failed = Vec::new();
        for (index, (task, key)) in pending.into_iter().zip(keys).enumerate() {
            match task {
                Err(i) => {
                    if slot.session.sentences[index].current != Some(i) {
                        self.commit(&mut slot, Event::Selected { index, review: i, at: now_millis() })?;
                    }
                    cached[index] = true;
                    results[index] = Some(slot.session.sentences[index].reviews[i].result.clone());
                }
                Ok((text, handle)) => {
                    let outcome = handle
                        .await
                        .map_err(|e| ServiceError::Backend { message: format!("check task failed: {e}"), retriable: false })
                        .and_then(|r| r.map_err(|e| ServiceError::from(e.at_sentence(index))));
                    match outcome {
                        Ok((result, warnings)) => {
                            results[index] = Some(result.clone());
                            let review = Review {
                                cache_key: key,
                                base_text: text,
                                tau: cfg.tau,
                                mode: cfg.mode,
                                result,
                                evidence_verdicts: Vec::new(),
                                warnings,
                            };
                            self.commit(&mut slot, Event::Reviewed { index, review: Box::new(review), at: now_millis() })?;
                        }
                        Err(e) => {
                            warn!(session_id, index, error = %e, "sentence check failed");
                            failed.push(FailedSentence {
                                index,
                                error: e.code(),
                                message: e.to_string(),
                                retriable: e.retriable(),
                            });
                        }
                    }
                }
            }
        }

        if failed.is_empty() {
            let report = AuditReport::from_results(results.into_iter().flatten().collect());
            let mut body = report.to_json();
            body["session_id"] = Value::from(session_id);
            body["cached"] = serde_json::json!(cached);
            return Ok(body);
        }
        let partial = serde_json::json!({
            "session_id": session_id,
            "sentences": results.iter().map(|r| r.as_ref().map(factaudit_core::auditor::result_json)).collect::<Vec<_>>(),
            "cached": cached,
        });
        Err(ServiceError::PartialFailure(Box::new(PartialFailure { failed, partial })))
    }

    pub async fn verdict(&self, session_id: &str, index: usize, verdict: Verdict) -> Result<Session, ServiceError> {
        let slot = self.slot(session_id).await?;
        let mut slot = slot.lock().await;
        self.commit(&mut slot, Event::Verdict { index, verdict, at: now_millis() })?;
        Ok(slot.session.clone())
    }

    /// Replaces a sentence's text. With `expected_text`, fails if the
    /// sentence no longer reads that way.
    pub async fn edit(
        &self,
        session_id: &str,
        index: usize,
        text: String,
        expected_text: Option<String>,
    ) -> Result<Session, ServiceError> {
        if text.trim().is_empty() {
            return Err(ServiceError::BadRequest("sentence text is empty".into()));
        }
        let slot = self.slot(session_id).await?;
        let mut slot = slot.lock().await;
        let current = &slot.session.sentence(index)?.text;
        if let Some(expected) = expected_text {
            if &expected != current {
                return Err(ServiceError::StaleEdit(format!("sentence {index} no longer reads as expected")));
            }
        }
        if current != &text {
            self.commit(&mut slot, Event::Edited { index, text, at: now_millis() })?;
        }
        Ok(slot.session.clone())
    }

    pub async fn annotations(&self, session_id: &str) -> Result<Vec<AnnotationRecord>, ServiceError> {
        Ok(self.get(session_id).await?.annotations())
    }

    /// Annotations of every session, sessions in creation order.
    pub async fn all_annotations(&self) -> Vec<AnnotationRecord> {
        self.list(None).await.iter().flat_map(Session::annotations).collect()
    }

    /// Writes a snapshot of every session and empties the logs.
    pub async fn compact_all(&self) -> Result<(), ServiceError> {
        let Some(store) = &self.inner.store else { return Ok(()) };
        let slots: Vec<_> = self.inner.sessions.read().await.values().cloned().collect();
        for slot in slots {
            let mut slot = slot.lock().await;
            store.compact(&slot.session, slot.seq)?;
            slot.uncompacted = 0;
        }
        Ok(())
    }
}
