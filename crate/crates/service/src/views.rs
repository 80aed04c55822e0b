//! Response bodies.

use std::collections::BTreeSet;

use factaudit_core::auditor::{result_json, DecodingMode};
use factaudit_core::evalkit::EvidenceVerdict;
use factaudit_core::textmodel::DocumentRecord;
use serde::Serialize;
use serde_json::Value;

use crate::session::{Review, SentenceState, Session};

#[derive(Debug, Clone, Serialize)]
pub struct SessionView {
    pub session_id: String,
    pub doc_id: String,
    pub document: DocumentRecord,
    pub sentences: Vec<SentenceView>,
    pub created_at: u64,
    pub updated_at: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SentenceView {
    pub index: usize,
    pub original: String,
    pub text: String,
    pub review: Option<ReviewView>,
    pub reviews: usize,
    pub new_evidence: BTreeSet<usize>,
    pub sufficient: Option<bool>,
    pub invalid: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReviewView {
    pub review_index: usize,
    pub tau: f64,
    pub mode: DecodingMode,
    /// The sentence text no longer matches the accepted edits of this review.
    pub stale: bool,
    pub result: Value,
    pub evidence_verdicts: Vec<EvidenceVerdict>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub doc_id: String,
    pub sentences: usize,
    pub created_at: u64,
    pub updated_at: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckView {
    pub session_id: String,
    pub sentence_index: usize,
    pub cached: bool,
    pub tau: f64,
    pub mode: DecodingMode,
    pub text: String,
    pub review_index: usize,
    pub result: Value,
    pub warnings: Vec<String>,
}

impl ReviewView {
    pub fn new(index: usize, review: &Review, text: &str) -> Self {
        Self {
            review_index: index,
            tau: review.tau,
            mode: review.mode,
            stale: review.expected_text() != text,
            result: result_json(&review.result),
            evidence_verdicts: review.evidence_verdicts.clone(),
            warnings: review.warnings.clone(),
        }
    }
}

impl SentenceView {
    pub fn new(index: usize, s: &SentenceState) -> Self {
        Self {
            index,
            original: s.original.clone(),
            text: s.text.clone(),
            review: s.current.map(|i| ReviewView::new(i, &s.reviews[i], &s.text)),
            reviews: s.reviews.len(),
            new_evidence: s.new_evidence.clone(),
            sufficient: s.sufficient,
            invalid: s.invalid,
        }
    }
}

impl From<&Session> for SessionView {
    fn from(s: &Session) -> Self {
        Self {
            session_id: s.session_id.clone(),
            doc_id: s.document.doc_id().to_string(),
            document: s.document.to_record(),
            sentences: s.sentences.iter().enumerate().map(|(i, st)| SentenceView::new(i, st)).collect(),
            created_at: s.created_at,
            updated_at: s.updated_at,
        }
    }
}

impl From<&Session> for SessionSummary {
    fn from(s: &Session) -> Self {
        Self {
            session_id: s.session_id.clone(),
            doc_id: s.document.doc_id().to_string(),
            sentences: s.sentences.len(),
            created_at: s.created_at,
            updated_at: s.updated_at,
        }
    }
}

impl CheckView {
    pub fn new(session: &Session, index: usize, cached: bool) -> Self {
        let s = &session.sentences[index];
        let review_index = s.current.expect("checked sentence has a review");
        let review = &s.reviews[review_index];
        Self {
            session_id: session.session_id.clone(),
            sentence_index: index,
            cached,
            tau: review.tau,
            mode: review.mode,
            text: s.text.clone(),
            review_index,
            result: result_json(&review.result),
            warnings: review.warnings.clone(),
        }
    }
}
