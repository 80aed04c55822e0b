//! Session state and the events that change it. State is only ever modified
//! through [`Session::apply`], so replaying a session's event log rebuilds it
//! exactly.

use std::collections::BTreeSet;

use factaudit_core::auditor::{apply_edits, DecodingMode, EditStatus, FactCheckResult};
use factaudit_core::evalkit::{
    AnnotationRecord, EditVerdict, EditVerdictKind, EvidenceVerdict, Relevance, SuggestedEdit,
};
use factaudit_core::textmodel::Document;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

/// One fact-check result for a sentence, with the verdicts given on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Review {
    pub cache_key: String,
    /// Sentence text the suggestions refer to.
    pub base_text: String,
    pub tau: f64,
    pub mode: DecodingMode,
    pub result: FactCheckResult,
    #[serde(default)]
    pub evidence_verdicts: Vec<EvidenceVerdict>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Review {
    fn has_verdicts(&self) -> bool {
        !self.evidence_verdicts.is_empty() || self.result.edits.iter().any(|e| e.status != EditStatus::Suggested)
    }

    /// Sentence text once the accepted edits are applied.
    pub fn expected_text(&self) -> String {
        apply_edits(&self.base_text, self.result.edits.iter().filter(|e| e.status == EditStatus::Accepted))
    }

    /// Copy with every edit back to suggested and no evidence verdicts.
    pub fn fresh(&self) -> Review {
        let mut r = self.clone();
        for e in &mut r.result.edits {
            e.status = EditStatus::Suggested;
        }
        r.evidence_verdicts.clear();
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceState {
    pub original: String,
    pub text: String,
    /// Every review issued for this sentence, oldest first.
    pub reviews: Vec<Review>,
    /// Index into `reviews` of the one currently shown.
    pub current: Option<usize>,
    pub new_evidence: BTreeSet<usize>,
    pub sufficient: Option<bool>,
    pub invalid: bool,
}

impl SentenceState {
    fn new(text: String) -> Self {
        Self {
            original: text.clone(),
            text,
            reviews: Vec::new(),
            current: None,
            new_evidence: BTreeSet::new(),
            sufficient: None,
            invalid: false,
        }
    }

    pub fn current_review(&self) -> Option<&Review> {
        self.current.map(|i| &self.reviews[i])
    }

    fn has_activity(&self) -> bool {
        self.reviews.iter().any(Review::has_verdicts)
            || !self.new_evidence.is_empty()
            || self.sufficient.is_some()
            || self.invalid
            || self.text != self.original
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    Edit { edit_index: usize, verdict: EditVerdictKind },
    Evidence { evidence_id: usize, verdict: Relevance },
    NewEvidence { evidence_id: usize, marked: bool },
    Sufficiency { sufficient: Option<bool> },
    Invalid { invalid: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Created { session_id: String, document: Document, sentences: Vec<String>, at: u64 },
    Reviewed { index: usize, review: Box<Review>, at: u64 },
    Selected { index: usize, review: usize, at: u64 },
    Verdict { index: usize, verdict: Verdict, at: u64 },
    Edited { index: usize, text: String, at: u64 },
}

impl Event {
    pub fn at(&self) -> u64 {
        match self {
            Event::Created { at, .. }
            | Event::Reviewed { at, .. }
            | Event::Selected { at, .. }
            | Event::Verdict { at, .. }
            | Event::Edited { at, .. } => *at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub document: Document,
    pub sentences: Vec<SentenceState>,
    pub created_at: u64,
    pub updated_at: u64,
}

impl Session {
    pub fn from_created(event: &Event) -> Result<Self, ServiceError> {
        match event {
            Event::Created { session_id, document, sentences, at } => Ok(Self {
                session_id: session_id.clone(),
                document: document.clone(),
                sentences: sentences.iter().cloned().map(SentenceState::new).collect(),
                created_at: *at,
                updated_at: *at,
            }),
            _ => Err(ServiceError::Corrupt("event log does not start with a creation event".into())),
        }
    }

    pub fn sentence(&self, index: usize) -> Result<&SentenceState, ServiceError> {
        self.sentences
            .get(index)
            .ok_or_else(|| ServiceError::NotFound(format!("sentence {index} in session {}", self.session_id)))
    }

    /// Current texts of the sentences before `index`.
    pub fn preceding(&self, index: usize) -> Vec<String> {
        self.sentences[..index].iter().map(|s| s.text.clone()).collect()
    }

    /// Checks that `event` can be applied without changing anything.
    pub fn validate(&self, event: &Event) -> Result<(), ServiceError> {
        self.clone().apply(event)
    }

    pub fn apply(&mut self, event: &Event) -> Result<(), ServiceError> {
        match event {
            Event::Created { .. } => {
                return Err(ServiceError::Corrupt("duplicate creation event".into()));
            }
            Event::Reviewed { index, review, .. } => {
                let s = self.sentence_mut(*index)?;
                s.reviews.push((**review).clone());
                s.current = Some(s.reviews.len() - 1);
            }
            Event::Selected { index, review, .. } => {
                let s = self.sentence_mut(*index)?;
                if *review >= s.reviews.len() {
                    return Err(ServiceError::Corrupt(format!("sentence {index} has no review {review}")));
                }
                s.current = Some(*review);
            }
            Event::Edited { index, text, .. } => {
                self.sentence_mut(*index)?.text = text.clone();
            }
            Event::Verdict { index, verdict, .. } => {
                let doc_has = |id: usize| self.document.contains_id(id);
                let doc_ok = match verdict {
                    Verdict::NewEvidence { evidence_id, .. } => doc_has(*evidence_id),
                    _ => true,
                };
                let s = self.sentence_mut(*index)?;
                apply_verdict(s, *index, verdict, doc_ok)?;
            }
        }
        self.updated_at = self.updated_at.max(event.at());
        Ok(())
    }

    fn sentence_mut(&mut self, index: usize) -> Result<&mut SentenceState, ServiceError> {
        let id = self.session_id.clone();
        self.sentences
            .get_mut(index)
            .ok_or_else(|| ServiceError::NotFound(format!("sentence {index} in session {id}")))
    }

    /// One record per sentence with any review verdict, flag, added evidence
    /// or text change, in sentence order. The suggestions reported are those
    /// of the first review that received verdicts (or the current review).
    pub fn annotations(&self) -> Vec<AnnotationRecord> {
        self.sentences
            .iter()
            .enumerate()
            .filter(|(_, s)| s.has_activity())
            .map(|(i, s)| self.annotation(i, s))
            .collect()
    }

    fn annotation(&self, index: usize, s: &SentenceState) -> AnnotationRecord {
        let review = s.reviews.iter().find(|r| r.has_verdicts()).or_else(|| s.current_review());
        let mut record = AnnotationRecord {
            session_id: self.session_id.clone(),
            doc_id: self.document.doc_id().to_string(),
            sentence_index: index,
            claim: s.original.clone(),
            suggested_revision: s.original.clone(),
            suggested_evidence: BTreeSet::new(),
            suggested_edits: Vec::new(),
            edit_verdicts: Vec::new(),
            corrected_revision: s.text.clone(),
            evidence_verdicts: Vec::new(),
            new_evidence: s.new_evidence.clone(),
            sufficient: s.sufficient,
            invalid: s.invalid,
        };
        if let Some(r) = review {
            record.claim = r.base_text.clone();
            record.suggested_revision = r.result.revision.clone();
            record.suggested_evidence = r.result.evidence_ids.clone();
            record.suggested_edits = r
                .result
                .edits
                .iter()
                .map(|e| SuggestedEdit { start: e.start, end: e.end, replacement: e.replacement_text.clone() })
                .collect();
            record.edit_verdicts = r
                .result
                .edits
                .iter()
                .enumerate()
                .filter_map(|(i, e)| match e.status {
                    EditStatus::Accepted => Some(EditVerdict { edit: i, verdict: EditVerdictKind::Accepted }),
                    EditStatus::Rejected => Some(EditVerdict { edit: i, verdict: EditVerdictKind::Rejected }),
                    EditStatus::Suggested => None,
                })
                .collect();
            record.evidence_verdicts = r.evidence_verdicts.clone();
        }
        if record.invalid {
            record.edit_verdicts.clear();
            record.evidence_verdicts.clear();
            record.new_evidence.clear();
            record.sufficient = None;
        }
        record
    }
}

fn apply_verdict(s: &mut SentenceState, index: usize, verdict: &Verdict, doc_ok: bool) -> Result<(), ServiceError> {
    match verdict {
        Verdict::Edit { edit_index, verdict } => {
            let text = s.text.clone();
            let review = current_review_mut(s, index)?;
            if *edit_index >= review.result.edits.len() {
                return Err(ServiceError::NotFound(format!("edit {edit_index} of sentence {index}")));
            }
            if review.expected_text() != text {
                return Err(ServiceError::StaleEdit(format!("sentence {index} changed since the suggestion")));
            }
            review.result.edits[*edit_index].status = match verdict {
                EditVerdictKind::Accepted => EditStatus::Accepted,
                EditVerdictKind::Rejected => EditStatus::Rejected,
            };
            s.text = current_review_mut(s, index)?.expected_text();
        }
        Verdict::Evidence { evidence_id, verdict } => {
            let review = current_review_mut(s, index)?;
            if !review.result.evidence_ids.contains(evidence_id) {
                return Err(ServiceError::NotFound(format!("suggested evidence {evidence_id} of sentence {index}")));
            }
            review.evidence_verdicts.retain(|v| v.id != *evidence_id);
            review.evidence_verdicts.push(EvidenceVerdict { id: *evidence_id, verdict: *verdict });
        }
        Verdict::NewEvidence { evidence_id, marked } => {
            if !doc_ok {
                return Err(ServiceError::NotFound(format!("document sentence {evidence_id}")));
            }
            if *marked {
                s.new_evidence.insert(*evidence_id);
            } else {
                s.new_evidence.remove(evidence_id);
            }
        }
        Verdict::Sufficiency { sufficient } => s.sufficient = *sufficient,
        Verdict::Invalid { invalid } => s.invalid = *invalid,
    }
    Ok(())
}

fn current_review_mut(s: &mut SentenceState, index: usize) -> Result<&mut Review, ServiceError> {
    match s.current {
        Some(i) => Ok(&mut s.reviews[i]),
        None => Err(ServiceError::NotFound(format!("no fact-check result for sentence {index}"))),
    }
}
