//! Evaluation: error-identification and evidence P/R/F1, the random-flip
//! precision baseline, precision/recall sweeps, inter-annotator agreement,
//! balanced accuracy and aggregate statistics over human annotations.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auditor::{decode_from_pass, plain_pass, AuditError, DecodingConfig, DecodingMode, FactCheckResult};
use crate::diffcore::{edit_counts, tag_errors, EditCounts, ErrorTags};
use crate::genbackend::GenerationBackend;
use crate::promptio::PromptTemplate;
use crate::scalar::{ratio_or_zero, Scalar};
use crate::textmodel::{ClaimContext, Document};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("tag sequences are over different claims")]
    SequenceMismatch,
    #[error("sentence id {id} outside a document of {doc_size} sentences")]
    OutOfRangeId { id: usize, doc_size: usize },
    #[error("baseline parameters out of domain: {0}")]
    DomainError(String),
    #[error("expected agreement is 1 but observed agreement is {observed}")]
    DegenerateMarginals { observed: f64 },
    #[error("ground truth lacks a {0} example")]
    MissingClass(&'static str),
    #[error("{left} labels vs {right} labels")]
    LengthMismatch { left: usize, right: usize },
    #[error("records do not align: {0}")]
    AlignmentError(String),
    #[error("taus must be sorted ascending")]
    UnsortedTaus,
    #[error("invalid annotation record: {0}")]
    InvalidRecord(String),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Json { line: usize, message: String },
}

/// Binary confusion counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Counts {
    pub fn from_labels(gold: &[bool], pred: &[bool]) -> Result<Self, EvalError> {
        if gold.len() != pred.len() {
            return Err(EvalError::LengthMismatch { left: gold.len(), right: pred.len() });
        }
        let mut c = Counts::default();
        for (&g, &p) in gold.iter().zip(pred) {
            match (g, p) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn prf<T: Scalar>(&self) -> Prf<T> {
        Prf::from_counts(self.tp, self.fp, self.fn_)
    }
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, rhs: Self) {
        self.tp += rhs.tp;
        self.fp += rhs.fp;
        self.fn_ += rhs.fn_;
        self.tn += rhs.tn;
    }
}

impl std::iter::Sum for Counts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Counts::default(), |mut a, b| {
            a += b;
            a
        })
    }
}

/// Precision, recall and F1 with the counts behind them. Precision is 0 with
/// no predicted positives, recall is 0 with no actual positives, and F1 is 0
/// when both are 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Prf<T> {
    pub recall: T,
    pub precision: T,
    pub f1: T,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl<T: Scalar> Prf<T> {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision: T = ratio_or_zero(tp, tp + fp);
        let recall: T = ratio_or_zero(tp, tp + fn_);
        let sum = precision + recall;
        let f1 = if sum > T::zero() { T::of(2.0) * precision * recall / sum } else { T::zero() };
        Self { recall, precision, f1, tp, fp, fn_ }
    }
}

pub fn error_id_counts(gt: &ErrorTags, pred: &ErrorTags) -> Result<Counts, EvalError> {
    if gt.words != pred.words || gt.incorrect.len() != pred.incorrect.len() {
        return Err(EvalError::SequenceMismatch);
    }
    Counts::from_labels(&gt.incorrect, &pred.incorrect)
}

/// Word-level P/R/F1 with "incorrect" as the positive class.
pub fn error_id_metrics<T: Scalar>(gt: &ErrorTags, pred: &ErrorTags) -> Result<Prf<T>, EvalError> {
    Ok(error_id_counts(gt, pred)?.prf())
}

/// Confusion counts over sentences `0..doc_size`, positive = evidence.
pub fn evidence_counts(gt: &BTreeSet<usize>, pred: &BTreeSet<usize>, doc_size: usize) -> Result<Counts, EvalError> {
    if let Some(&id) = gt.iter().chain(pred).find(|&&id| id >= doc_size) {
        return Err(EvalError::OutOfRangeId { id, doc_size });
    }
    let tp = gt.intersection(pred).count();
    let fp = pred.len() - tp;
    let fn_ = gt.len() - tp;
    Ok(Counts { tp, fp, fn_, tn: doc_size - tp - fp - fn_ })
}

pub fn evidence_metrics<T: Scalar>(gt: &BTreeSet<usize>, pred: &BTreeSet<usize>, doc_size: usize) -> Result<Prf<T>, EvalError> {
    Ok(evidence_counts(gt, pred, doc_size)?.prf())
}

/// Inputs of the random-flip baseline: a model with recall `alpha` and
/// precision `beta` on data with positive rate `gamma`, pushed to recall
/// `alpha_prime` by flagging extra words uniformly at random.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BaselineParams<T> {
    pub alpha: T,
    pub beta: T,
    pub gamma: T,
    pub alpha_prime: T,
}

impl<T: Scalar> BaselineParams<T> {
    pub fn new(alpha: T, beta: T, gamma: T, alpha_prime: T) -> Self {
        Self { alpha, beta, gamma, alpha_prime }
    }
}

/// Expected precision after random flipping:
/// `α′γ / (αγ/β + ((α′−α)/(1−α))·(1 − αγ/β))`.
pub fn baseline_expected_precision<T: Scalar>(p: &BaselineParams<T>) -> Result<T, EvalError> {
    let BaselineParams { alpha, beta, gamma, alpha_prime } = *p;
    let unit = |x: T| x >= T::zero() && x <= T::one();
    if !(unit(alpha) && unit(beta) && unit(gamma) && unit(alpha_prime)) {
        return Err(EvalError::DomainError(format!("parameters must lie in [0, 1]: {p:?}")));
    }
    if beta == T::zero() {
        return Err(EvalError::DomainError("beta must be positive".into()));
    }
    if alpha_prime < alpha {
        return Err(EvalError::DomainError("alpha_prime must be at least alpha".into()));
    }
    if alpha_prime == alpha {
        return Ok(beta);
    }
    if alpha == T::one() {
        return Err(EvalError::DomainError("alpha = 1 leaves nothing to flip".into()));
    }
    // fraction of all words the model flags
    let flagged = alpha * gamma / beta;
    if flagged > T::one() {
        return Err(EvalError::DomainError(format!("alpha*gamma/beta = {flagged:?} exceeds 1")));
    }
    let extra = (alpha_prime - alpha) / (T::one() - alpha) * (T::one() - flagged);
    Ok(alpha_prime * gamma / (flagged + extra))
}

/// Cohen's kappa for two binary labelings of the same items.
pub fn cohens_kappa<T: Scalar>(a: &[bool], b: &[bool]) -> Result<T, EvalError> {
    let c = Counts::from_labels(a, b)?;
    let n = c.total();
    if n == 0 {
        return Err(EvalError::DegenerateMarginals { observed: 1.0 });
    }
    let n_t = T::of_count(n);
    let p_o = T::of_count(c.tp + c.tn) / n_t;
    let a_pos = T::of_count(c.tp + c.fn_) / n_t;
    let b_pos = T::of_count(c.tp + c.fp) / n_t;
    let p_e = a_pos * b_pos + (T::one() - a_pos) * (T::one() - b_pos);
    if p_e == T::one() {
        return if p_o == T::one() {
            Ok(T::one())
        } else {
            Err(EvalError::DegenerateMarginals { observed: p_o.to_f64().unwrap_or(f64::NAN) })
        };
    }
    Ok((p_o - p_e) / (T::one() - p_e))
}

/// Mean of true-positive and true-negative rates.
pub fn balanced_accuracy<T: Scalar>(gt: &[bool], pred: &[bool]) -> Result<T, EvalError> {
    let c = Counts::from_labels(gt, pred)?;
    if c.tp + c.fn_ == 0 {
        return Err(EvalError::MissingClass("positive"));
    }
    if c.tn + c.fp == 0 {
        return Err(EvalError::MissingClass("negative"));
    }
    let tpr: T = ratio_or_zero(c.tp, c.tp + c.fn_);
    let tnr: T = ratio_or_zero(c.tn, c.tn + c.fp);
    Ok((tpr + tnr) / T::of(2.0))
}

/// One evaluation example: a claim (with the summary before it) checked
/// against a document, with reference revision and evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub doc: Document,
    #[serde(default)]
    pub summary_prefix: Vec<String>,
    pub claim: String,
    pub gt_evidence: BTreeSet<usize>,
    pub gt_revision: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<AnnotationRecord>,
}

impl GroundTruthRecord {
    pub fn validate(&self) -> Result<(), EvalError> {
        if let Some(&id) = self.gt_evidence.iter().find(|&&id| !self.doc.contains_id(id)) {
            return Err(EvalError::OutOfRangeId { id, doc_size: self.doc_size() });
        }
        Ok(())
    }

    pub fn context(&self) -> Result<ClaimContext, EvalError> {
        ClaimContext::new(self.summary_prefix.clone(), self.claim.clone())
            .map_err(|e| EvalError::Audit(AuditError::from(e)))
    }

    pub fn gt_tags(&self) -> ErrorTags {
        tag_errors(&self.claim, &self.gt_revision)
    }

    /// Evidence classification universe: ids `0..=max id`.
    pub fn doc_size(&self) -> usize {
        self.doc.sentences().last().map(|s| s.id + 1).unwrap_or(0)
    }
}

/// Model output for one claim, as stored in prediction files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub claim: String,
    pub evidence: BTreeSet<usize>,
    pub revision: String,
}

impl From<&FactCheckResult> for PredictionRecord {
    fn from(r: &FactCheckResult) -> Self {
        Self { claim: r.claim.clone(), evidence: r.evidence_ids.clone(), revision: r.revision.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditVerdictKind {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relevance {
    Relevant,
    NotRelevant,
}

/// A suggested edit as exported: claim words `start..end` replaced by `replacement`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestedEdit {
    pub start: usize,
    pub end: usize,
    pub replacement: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditVerdict {
    pub edit: usize,
    pub verdict: EditVerdictKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceVerdict {
    pub id: usize,
    pub verdict: Relevance,
}

/// Human review of one summary sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    #[serde(default)]
    pub session_id: String,
    pub doc_id: String,
    pub sentence_index: usize,
    pub claim: String,
    pub suggested_revision: String,
    pub suggested_evidence: BTreeSet<usize>,
    pub suggested_edits: Vec<SuggestedEdit>,
    #[serde(default)]
    pub edit_verdicts: Vec<EditVerdict>,
    /// Final text after accepted edits and freeform corrections.
    pub corrected_revision: String,
    #[serde(default)]
    pub evidence_verdicts: Vec<EvidenceVerdict>,
    #[serde(default)]
    pub new_evidence: BTreeSet<usize>,
    #[serde(default)]
    pub sufficient: Option<bool>,
    #[serde(default)]
    pub invalid: bool,
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidRecord(format!("{} #{}: {m}", self.doc_id, self.sentence_index)));
        if self.invalid
            && (!self.edit_verdicts.is_empty()
                || !self.evidence_verdicts.is_empty()
                || !self.new_evidence.is_empty()
                || self.sufficient.is_some())
        {
            return bad("invalid sentence carries verdicts".into());
        }
        if let Some(v) = self.edit_verdicts.iter().find(|v| v.edit >= self.suggested_edits.len()) {
            return bad(format!("verdict for unknown edit {}", v.edit));
        }
        if let Some(v) = self.evidence_verdicts.iter().find(|v| !self.suggested_evidence.contains(&v.id)) {
            return bad(format!("verdict for unsuggested evidence {}", v.id));
        }
        Ok(())
    }

    pub fn edit_verdict(&self, edit: usize) -> Option<EditVerdictKind> {
        self.edit_verdicts.iter().rev().find(|v| v.edit == edit).map(|v| v.verdict)
    }

    pub fn evidence_verdict(&self, id: usize) -> Option<Relevance> {
        self.evidence_verdicts.iter().rev().find(|v| v.id == id).map(|v| v.verdict)
    }

    /// Suggested evidence not judged irrelevant, plus annotator-added evidence.
    pub fn gold_evidence(&self) -> BTreeSet<usize> {
        self.suggested_evidence
            .iter()
            .copied()
            .filter(|&id| self.evidence_verdict(id) != Some(Relevance::NotRelevant))
            .chain(self.new_evidence.iter().copied())
            .collect()
    }

    fn key(&self) -> (&str, usize, &str) {
        (&self.doc_id, self.sentence_index, &self.claim)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MetricsReport<T> {
    pub error: Prf<T>,
    pub evidence: Prf<T>,
    /// Fraction of claim words that are incorrect per the reference.
    pub base_rate: T,
    /// Percentage of suggested edits accepted; `None` with no suggestions.
    pub accepted_pct: Option<T>,
    /// Percentage of judged valid sentences whose evidence was sufficient.
    pub sufficient_pct: Option<T>,
    /// Percentage of claim words the predicted revisions delete or replace.
    pub pct_del: T,
    /// Added words as a percentage of claim words (may exceed 100).
    pub pct_add: T,
    pub kappa: Option<T>,
    #[serde(default)]
    pub evidence_kappa: Option<T>,
    pub balanced_accuracy: Option<T>,
    pub sentences: usize,
}

fn pct<T: Scalar>(num: usize, den: usize) -> T {
    ratio_or_zero::<T>(num, den) * T::of(100.0)
}

/// Pooled statistics over annotated sentences. The reference revision is the
/// annotator's corrected text; reference evidence is suggested evidence not
/// marked irrelevant plus new evidence. Invalid sentences are skipped.
/// With `second`, kappa compares the two annotators' word tags and evidence
/// ratings on the sentences both reviewed.
pub fn aggregate_report<T: Scalar>(
    records: &[AnnotationRecord],
    second: Option<&[AnnotationRecord]>,
) -> Result<MetricsReport<T>, EvalError> {
    let mut error = Counts::default();
    let mut evidence = Counts::default();
    let mut edits = EditCounts::default();
    let (mut suggested, mut accepted) = (0, 0);
    let (mut judged, mut sufficient) = (0, 0);
    let mut gt_flags = Vec::new();
    let mut pred_flags = Vec::new();
    let mut sentences = 0;
    for r in records {
        r.validate()?;
        if r.invalid {
            continue;
        }
        sentences += 1;
        let gt = tag_errors(&r.claim, &r.corrected_revision);
        let pred = tag_errors(&r.claim, &r.suggested_revision);
        error += error_id_counts(&gt, &pred)?;
        let gold_ev = r.gold_evidence();
        let tp = gold_ev.intersection(&r.suggested_evidence).count();
        evidence += Counts { tp, fp: r.suggested_evidence.len() - tp, fn_: gold_ev.len() - tp, tn: 0 };
        edits += edit_counts(&r.claim, &r.suggested_revision);
        suggested += r.suggested_edits.len();
        accepted += (0..r.suggested_edits.len())
            .filter(|&i| r.edit_verdict(i) == Some(EditVerdictKind::Accepted))
            .count();
        if let Some(s) = r.sufficient {
            judged += 1;
            sufficient += usize::from(s);
        }
        gt_flags.push(gt.incorrect_count() > 0);
        pred_flags.push(!r.suggested_edits.is_empty() || pred.incorrect_count() > 0);
    }
    let (kappa, evidence_kappa) = match second {
        Some(other) => agreement(records, other)?,
        None => (None, None),
    };
    Ok(MetricsReport {
        error: error.prf(),
        evidence: evidence.prf(),
        base_rate: ratio_or_zero(error.tp + error.fn_, error.total()),
        accepted_pct: (suggested > 0).then(|| pct(accepted, suggested)),
        sufficient_pct: (judged > 0).then(|| pct(sufficient, judged)),
        pct_del: pct(edits.deleted, edits.claim_words),
        pct_add: pct(edits.added, edits.claim_words),
        kappa,
        evidence_kappa,
        balanced_accuracy: balanced_accuracy(&gt_flags, &pred_flags).ok(),
        sentences,
    })
}

type Agreement<T> = (Option<T>, Option<T>);

fn agreement<T: Scalar>(a: &[AnnotationRecord], b: &[AnnotationRecord]) -> Result<Agreement<T>, EvalError> {
    let by_key: HashMap<_, _> = b.iter().filter(|r| !r.invalid).map(|r| (r.key(), r)).collect();
    let (mut word_a, mut word_b) = (Vec::new(), Vec::new());
    let (mut ev_a, mut ev_b) = (Vec::new(), Vec::new());
    for ra in a.iter().filter(|r| !r.invalid) {
        let Some(rb) = by_key.get(&ra.key()) else {
            continue;
        };
        word_a.extend(tag_errors(&ra.claim, &ra.corrected_revision).incorrect);
        word_b.extend(tag_errors(&rb.claim, &rb.corrected_revision).incorrect);
        for &id in ra.suggested_evidence.intersection(&rb.suggested_evidence) {
            if let (Some(x), Some(y)) = (ra.evidence_verdict(id), rb.evidence_verdict(id)) {
                ev_a.push(x == Relevance::Relevant);
                ev_b.push(y == Relevance::Relevant);
            }
        }
    }
    if word_a.is_empty() {
        return Err(EvalError::AlignmentError("no sentence reviewed by both annotators".into()));
    }
    let kappa = cohens_kappa(&word_a, &word_b).ok();
    let evidence_kappa = if ev_a.is_empty() { None } else { cohens_kappa(&ev_a, &ev_b).ok() };
    Ok((kappa, evidence_kappa))
}

/// Scores predictions against references, matched by position (claims must agree).
pub fn evaluate_predictions<T: Scalar>(
    gold: &[GroundTruthRecord],
    predictions: &[PredictionRecord],
) -> Result<MetricsReport<T>, EvalError> {
    if gold.len() != predictions.len() {
        return Err(EvalError::AlignmentError(format!(
            "{} references but {} predictions",
            gold.len(),
            predictions.len()
        )));
    }
    let mut error = Counts::default();
    let mut evidence = Counts::default();
    let mut edits = EditCounts::default();
    let mut gt_flags = Vec::new();
    let mut pred_flags = Vec::new();
    for (i, (g, p)) in gold.iter().zip(predictions).enumerate() {
        g.validate()?;
        if g.claim != p.claim {
            return Err(EvalError::AlignmentError(format!("record {i}: claims differ")));
        }
        let gt = g.gt_tags();
        let pred = tag_errors(&p.claim, &p.revision);
        error += error_id_counts(&gt, &pred)?;
        evidence += evidence_counts(&g.gt_evidence, &p.evidence, g.doc_size())?;
        edits += edit_counts(&p.claim, &p.revision);
        gt_flags.push(gt.incorrect_count() > 0);
        pred_flags.push(edit_counts(&p.claim, &p.revision) != EditCounts { claim_words: pred.len(), ..Default::default() });
    }
    Ok(MetricsReport {
        error: error.prf(),
        evidence: evidence.prf(),
        base_rate: ratio_or_zero(error.tp + error.fn_, error.total()),
        accepted_pct: None,
        sufficient_pct: None,
        pct_del: pct(edits.deleted, edits.claim_words),
        pct_add: pct(edits.added, edits.claim_words),
        kappa: None,
        evidence_kappa: None,
        balanced_accuracy: balanced_accuracy(&gt_flags, &pred_flags).ok(),
        sentences: gold.len(),
    })
}

/// Runs the fact-checker over a dataset under `cfg`.
pub fn predict_dataset<B: GenerationBackend + ?Sized>(
    dataset: &[GroundTruthRecord],
    template: &PromptTemplate,
    cfg: &DecodingConfig,
    backend: &B,
) -> Result<Vec<FactCheckResult>, EvalError> {
    dataset
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let ctx = r.context()?;
            crate::auditor::fact_check_sentence(&r.doc, &ctx, template, cfg, backend)
                .map_err(|e| EvalError::Audit(e.at_sentence(i)))
        })
        .collect()
}

/// One threshold of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SweepRow<T> {
    pub tau: T,
    /// Thresholded-edit error identification.
    pub error: Prf<T>,
    /// Expected precision of random flipping at this row's recall, starting
    /// from plain decoding. `None` where the recall is below plain recall or
    /// the baseline is undefined.
    pub baseline_precision: Option<T>,
    /// Low-probability flagging with threshold `tau`.
    pub low_prob: Prf<T>,
}

/// Error-identification P/R/F1 across thresholds for thresholded editing,
/// alongside the random-flip and low-probability baselines. Each record gets
/// one plain pass; every threshold re-decodes from it.
pub fn pr_sweep<T: Scalar, B: GenerationBackend + ?Sized>(
    dataset: &[GroundTruthRecord],
    taus: &[T],
    template: &PromptTemplate,
    cfg: &DecodingConfig,
    backend: &B,
) -> Result<Vec<SweepRow<T>>, EvalError> {
    if taus.windows(2).any(|w| w[0] > w[1]) {
        return Err(EvalError::UnsortedTaus);
    }
    let mut plain = Counts::default();
    let mut thresholded = vec![Counts::default(); taus.len()];
    let mut low_prob = vec![Counts::default(); taus.len()];
    for (i, record) in dataset.iter().enumerate() {
        let at = |e: AuditError| EvalError::Audit(e.at_sentence(i));
        let ctx = record.context()?;
        let pass = plain_pass(&record.doc, &ctx, template, cfg, backend).map_err(at)?;
        let gt = record.gt_tags();
        let base = DecodingConfig { mode: DecodingMode::Plain, ..cfg.clone() };
        plain += error_id_counts(&gt, &decode_from_pass(&record.claim, &pass, &base, backend).map_err(at)?.tags)?;
        for (k, &tau) in taus.iter().enumerate() {
            let tau = tau.to_f64().expect("finite tau");
            let th = DecodingConfig { tau, mode: DecodingMode::Thresholded, ..cfg.clone() };
            let result = decode_from_pass(&record.claim, &pass, &th, backend).map_err(at)?;
            thresholded[k] += error_id_counts(&gt, &result.tags)?;
            let lp = DecodingConfig { tau, mode: DecodingMode::LowProbFlag, ..cfg.clone() };
            let result = decode_from_pass(&record.claim, &pass, &lp, backend).map_err(at)?;
            low_prob[k] += error_id_counts(&gt, result.predicted_tags())?;
        }
    }
    let plain_prf: Prf<T> = plain.prf();
    let gamma: T = ratio_or_zero(plain.tp + plain.fn_, plain.total());
    Ok(taus
        .iter()
        .zip(thresholded.iter().zip(&low_prob))
        .map(|(&tau, (th, lp))| {
            let error: Prf<T> = th.prf();
            let params = BaselineParams::new(plain_prf.recall, plain_prf.precision, gamma, error.recall);
            SweepRow { tau, error, baseline_precision: baseline_expected_precision(&params).ok(), low_prob: lp.prf() }
        })
        .collect())
}

pub const SWEEP_CSV_HEADER: [&str; 8] = [
    "tau",
    "recall",
    "precision",
    "f1",
    "baseline_precision",
    "lowprob_recall",
    "lowprob_precision",
    "lowprob_f1",
];

impl<T: Scalar> SweepRow<T> {
    /// Values in [`SWEEP_CSV_HEADER`] order; an undefined baseline is empty.
    pub fn csv_fields(&self) -> [String; 8] {
        let f = |x: T| format!("{:?}", x.to_f64().unwrap_or(f64::NAN));
        [
            f(self.tau),
            f(self.error.recall),
            f(self.error.precision),
            f(self.error.f1),
            self.baseline_precision.map(f).unwrap_or_default(),
            f(self.low_prob.recall),
            f(self.low_prob.precision),
            f(self.low_prob.f1),
        ]
    }
}

pub fn write_sweep_csv<T: Scalar>(writer: impl Write, rows: &[SweepRow<T>]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SWEEP_CSV_HEADER)?;
    for row in rows {
        w.write_record(row.csv_fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, EvalError> {
    let path = path.as_ref();
    let io = |source| EvalError::Io { path: path.display().to_string(), source };
    let file = std::fs::File::open(path).map_err(io)?;
    parse_jsonl(std::io::BufReader::new(file)).map_err(|e| match e {
        EvalError::Io { source, .. } => io(source),
        other => other,
    })
}

pub fn parse_jsonl<T: DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| EvalError::Io { path: String::new(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| EvalError::Json { line: i + 1, message: e.to_string() })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(mut writer: impl Write, items: &[T]) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut writer, item)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
