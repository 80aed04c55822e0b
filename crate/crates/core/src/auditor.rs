//! Fact-checking orchestration: evidence + revision for each sentence,
//! thresholded-edit decoding, the low-probability flagging baseline and the
//! any-edit factuality classifier.

use std::collections::BTreeSet;
use std::ops::Range;

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::{align, change_blocks, diff_at_pos, tag_sequences, ErrorTags, Step};
use crate::genbackend::{run_fact_check_pass, BackendError, BackendQuery, FactCheckPass, GenerationBackend};
use crate::promptio::{
    approx_tokens, build_input, parse_output, render_input, truncate_document, Leniency, PromptError, PromptTemplate,
    RelevanceScorer, Truncation, TruncationOptions, EVIDENCE_MARKER, REVISION_MARKER,
};
use crate::textmodel::{tokenize_words, ClaimContext, Document, TextError};

#[derive(Debug, Error)]
pub enum AuditError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error("thresholded edit exceeded {cap} iterations")]
    IterationCapExceeded { cap: usize },
    #[error("{tokens} tokens but {probs} probabilities")]
    LengthMismatch { tokens: usize, probs: usize },
    #[error("invalid decoding config: {0}")]
    InvalidConfig(String),
    #[error("sentence {index}: {source}")]
    AtSentence {
        index: usize,
        #[source]
        source: Box<AuditError>,
    },
}

impl AuditError {
    pub fn at_sentence(self, index: usize) -> Self {
        AuditError::AtSentence { index, source: Box::new(self) }
    }

    /// The error with any sentence wrapper removed.
    pub fn root(&self) -> &AuditError {
        match self {
            AuditError::AtSentence { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_retriable(&self) -> bool {
        matches!(self.root(), AuditError::Backend(e) if e.is_retriable())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodingMode {
    #[default]
    Plain,
    Thresholded,
    LowProbFlag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodingConfig {
    /// Intervention threshold for thresholded mode, or the flagging threshold
    /// for low-probability mode.
    pub tau: f64,
    pub mode: DecodingMode,
    /// Defaults to `4 * (|R| + max_new_tokens)`.
    #[serde(default)]
    pub max_iterations: Option<usize>,
    pub max_new_tokens: usize,
    #[serde(default)]
    pub leniency: Leniency,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        Self {
            tau: 0.0,
            mode: DecodingMode::Plain,
            max_iterations: None,
            max_new_tokens: crate::genbackend::DEFAULT_MAX_NEW_TOKENS,
            leniency: Leniency::Lenient,
        }
    }
}

impl DecodingConfig {
    pub fn thresholded(tau: f64) -> Self {
        Self { tau, mode: DecodingMode::Thresholded, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), AuditError> {
        if !(0.0..1.0).contains(&self.tau) {
            return Err(AuditError::InvalidConfig(format!("tau must be in [0, 1), got {}", self.tau)));
        }
        if self.max_new_tokens == 0 {
            return Err(AuditError::InvalidConfig("max_new_tokens must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditStatus {
    #[default]
    Suggested,
    Accepted,
    Rejected,
}

/// A suggested change to claim words `start..end` (empty range = insertion
/// before word `start`). Empty `replacement` is a deletion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditSpan {
    pub start: usize,
    pub end: usize,
    pub replacement: Vec<String>,
    /// Replacement as it appears in the revision, original spacing included.
    pub replacement_text: String,
    #[serde(default)]
    pub status: EditStatus,
}

impl EditSpan {
    pub fn words(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn is_deletion(&self) -> bool {
        self.replacement.is_empty()
    }
}

/// One edit per change block of the claim/revision word alignment.
pub fn derive_edits(claim: &str, revision: &str) -> Vec<EditSpan> {
    let a = tokenize_words(claim);
    let b = tokenize_words(revision);
    change_blocks(&align(&a.words, &b.words))
        .into_iter()
        .map(|block| {
            let span = b.byte_span(block.target.clone());
            EditSpan {
                start: block.source.start,
                end: block.source.end,
                replacement: b.words[block.target].to_vec(),
                replacement_text: revision[span].to_string(),
                status: EditStatus::Suggested,
            }
        })
        .collect()
}

/// Applies `edits` (spans over `claim`'s words) to the claim text. Deleted
/// spans take their preceding whitespace with them, or the following
/// whitespace at the start of the text. A space is added at an edit boundary
/// wherever plain concatenation would merge two words.
pub fn apply_edits<'a>(claim: &str, edits: impl IntoIterator<Item = &'a EditSpan>) -> String {
    let words = tokenize_words(claim);
    let mut chosen: Vec<&EditSpan> = edits.into_iter().collect();
    chosen.sort_by_key(|e| std::cmp::Reverse(e.start));
    let mut text = claim.to_string();
    for edit in chosen {
        let span = words.byte_span(edit.words());
        let (range, middle) = if edit.start == edit.end {
            let at = span.start;
            let before_ws = at > 0 && text[..at].ends_with(char::is_whitespace);
            let insert = if edit.start >= words.len() {
                format!(" {}", edit.replacement_text)
            } else if before_ws || at == 0 {
                format!("{} ", edit.replacement_text)
            } else {
                format!(" {} ", edit.replacement_text)
            };
            (at..at, insert)
        } else if edit.is_deletion() {
            let ws_before = text[..span.start].len() - text[..span.start].trim_end().len();
            let range = if ws_before > 0 {
                span.start - ws_before..span.end
            } else {
                let ws_after = text[span.end..].len() - text[span.end..].trim_start().len();
                span.start..span.end + ws_after
            };
            (range, String::new())
        } else {
            (span, edit.replacement_text.clone())
        };
        let left = glue(&text[..range.start], &middle);
        text = glue(&left, &text[range.end..]);
    }
    text
}

fn glue(left: &str, right: &str) -> String {
    let touching = left.ends_with(|c: char| !c.is_whitespace()) && right.starts_with(|c: char| !c.is_whitespace());
    let joined = format!("{left}{right}");
    if touching {
        let mut apart = tokenize_words(left).words;
        apart.extend(tokenize_words(right).words);
        if tokenize_words(&joined).words != apart {
            return format!("{left} {right}");
        }
    }
    joined
}

/// Output tokens of a fact-check pass split at the revision marker.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RevisionTokens {
    /// Tokens up to and including the one that completes `REVISION:`. These
    /// carry the evidence and stay fixed while the revision is re-decoded.
    pub head: Vec<String>,
    /// Text in the last head token after the marker (normally empty).
    pub lead: String,
    pub tokens: Vec<String>,
    pub probs: Vec<f64>,
}

impl RevisionTokens {
    pub fn split(pass: &FactCheckPass) -> Option<Self> {
        let raw = pass.tokens.concat();
        let ev = raw.find(EVIDENCE_MARKER)?;
        let marker_end = ev + EVIDENCE_MARKER.len() + raw[ev + EVIDENCE_MARKER.len()..].find(REVISION_MARKER)?
            + REVISION_MARKER.len();
        let mut end = 0;
        for (k, tok) in pass.tokens.iter().enumerate() {
            end += tok.len();
            if end >= marker_end {
                return Some(Self {
                    head: pass.tokens[..=k].to_vec(),
                    lead: raw[marker_end..end].to_string(),
                    tokens: pass.tokens[k + 1..].to_vec(),
                    probs: pass.probs.get(k + 1..).map(<[f64]>::to_vec).unwrap_or_default(),
                });
            }
        }
        None
    }

    pub fn text_of(&self, tokens: &[String]) -> String {
        let mut s = self.lead.clone();
        for t in tokens {
            s.push_str(t);
        }
        s.trim().to_string()
    }

    pub fn text(&self) -> String {
        self.text_of(&self.tokens)
    }

    /// Byte span of each revision token within [`RevisionTokens::text`],
    /// clipped to the trimmed text.
    pub fn token_spans(&self) -> Vec<Range<usize>> {
        let mut full = self.lead.clone();
        for t in &self.tokens {
            full.push_str(t);
        }
        let shift = full.len() - full.trim_start().len();
        let trimmed_len = full.trim().len();
        let clip = |x: usize| x.saturating_sub(shift).min(trimmed_len);
        let mut pos = self.lead.len();
        self.tokens
            .iter()
            .map(|t| {
                let r = clip(pos)..clip(pos + t.len());
                pos += t.len();
                r
            })
            .collect()
    }
}

/// One committed change during thresholded decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct Intervention {
    /// 0-based index into the revision tokens at the time of the change.
    pub position: usize,
    pub original: String,
    pub original_prob: f64,
    pub alternative: String,
    pub n_del: usize,
    pub n_add: usize,
    pub repl: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ThresholdedOutcome {
    pub tokens: Vec<String>,
    pub interventions: Vec<Intervention>,
    /// Loop iterations executed (one per examined position).
    pub iterations: usize,
    /// The last intervention replaced the rest of the revision with the terminal marker.
    pub ended_by_truncation: bool,
}

/// Thresholded Edit decoding over an initial greedy revision `revision`.
///
/// Scans positions left to right. Where the current token's probability is
/// `<= tau`, the best other token is forced, the rest is completed greedily,
/// and only the first contiguous change against the current revision is
/// committed. The pointer then moves past the forced token and any tokens
/// inserted with it, so the remaining original tokens are still examined.
/// `head` is the fixed output prefix (evidence part) the revision is
/// conditioned on.
pub fn thresholded_edit<B: GenerationBackend + ?Sized>(
    backend: &B,
    query: &BackendQuery,
    head: &[String],
    revision: Vec<String>,
    tau: f64,
    max_iterations: Option<usize>,
) -> Result<ThresholdedOutcome, AuditError> {
    let cap = max_iterations.unwrap_or(4 * (revision.len() + query.max_new_tokens));
    let mut r = revision;
    let mut out = ThresholdedOutcome::default();
    let mut t = 0;
    while t < r.len() {
        out.iterations += 1;
        if out.iterations > cap {
            return Err(AuditError::IterationCapExceeded { cap });
        }
        let mut prefix: Vec<String> = head.to_vec();
        prefix.extend_from_slice(&r[..t]);
        let dist = backend.next_token_probs(query, &prefix)?;
        // a token outside the returned top-k has unknown, hence minimal, probability
        let p = dist.prob_of(&r[t]).unwrap_or(0.0);
        if p <= tau {
            if let Some(alt) = dist.best_excluding(&r[t]) {
                let alt = alt.token.clone();
                let mut r_prime = r[..t].to_vec();
                if alt != backend.terminal() {
                    prefix.push(alt.clone());
                    r_prime.push(alt.clone());
                    let completion = backend.greedy_complete(query, &prefix)?;
                    r_prime.extend(completion.tokens);
                }
                let span = diff_at_pos(&r, &r_prime, t).expect("forced token differs from r[t]");
                out.ended_by_truncation = alt == backend.terminal();
                out.interventions.push(Intervention {
                    position: t,
                    original: r[t].clone(),
                    original_prob: p,
                    alternative: alt,
                    n_del: span.n_del,
                    n_add: span.n_add,
                    repl: span.repl.clone(),
                });
                r.splice(t..t + span.n_del, span.repl);
                t += span.n_add.max(1);
                continue;
            }
        }
        t += 1;
    }
    out.tokens = r;
    Ok(out)
}

/// Post-hoc flagging: `already_flagged ∪ {i : probs[i] < threshold}` over
/// token indices.
pub fn low_prob_flag<S, T: Float>(
    tokens: &[S],
    probs: &[T],
    threshold: T,
    already_flagged: &BTreeSet<usize>,
) -> Result<BTreeSet<usize>, AuditError> {
    if tokens.len() != probs.len() {
        return Err(AuditError::LengthMismatch { tokens: tokens.len(), probs: probs.len() });
    }
    let mut flags = already_flagged.clone();
    flags.extend(probs.iter().enumerate().filter(|(_, &p)| p < threshold).map(|(i, _)| i));
    Ok(flags)
}

/// Low-probability flagging lifted to claim words: claim words the revision
/// deletes, plus kept claim words whose revision counterpart overlaps a
/// revision token with probability below `threshold`.
pub fn low_prob_claim_tags(
    claim: &str,
    revision: &RevisionTokens,
    threshold: f64,
) -> Result<ErrorTags, AuditError> {
    let flagged = low_prob_flag(&revision.tokens, &revision.probs, threshold, &BTreeSet::new())?;
    let text = revision.text();
    let claim_words = tokenize_words(claim);
    let rev_words = tokenize_words(&text);
    let mut tags = tag_sequences(&claim_words, &rev_words);
    if flagged.is_empty() {
        return Ok(tags);
    }
    let spans = revision.token_spans();
    let flagged_spans: Vec<&Range<usize>> = flagged.iter().map(|&i| &spans[i]).filter(|r| !r.is_empty()).collect();
    for step in align(&claim_words.words, &rev_words.words) {
        if let Step::Keep(i, j) = step {
            let w = &rev_words.source_offsets[j];
            if flagged_spans.iter().any(|s| s.start < w.end && w.start < s.end) {
                tags.incorrect[i] = true;
            }
        }
    }
    Ok(tags)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactCheckResult {
    pub claim: String,
    pub evidence_ids: BTreeSet<usize>,
    pub revision: String,
    pub edits: Vec<EditSpan>,
    pub tags: ErrorTags,
    /// Probabilities of the revision tokens from the plain greedy pass.
    #[serde(default)]
    pub per_token_probs: Option<Vec<f64>>,
    /// Claim words flagged by low-probability mode (beyond `tags`).
    #[serde(default)]
    pub low_prob_tags: Option<ErrorTags>,
    #[serde(default)]
    pub dropped_evidence: Vec<usize>,
    #[serde(default)]
    pub interventions: usize,
}

impl FactCheckResult {
    /// Claim and revision have the same words.
    pub fn is_consistent(&self) -> bool {
        tokenize_words(&self.claim).words == tokenize_words(&self.revision).words
    }

    pub fn predicted_tags(&self) -> &ErrorTags {
        self.low_prob_tags.as_ref().unwrap_or(&self.tags)
    }
}

/// Plain pass plus its split, kept so several decodings can reuse one pass.
#[derive(Debug, Clone)]
pub struct PlainPass {
    pub query: BackendQuery,
    pub pass: FactCheckPass,
    pub evidence_ids: BTreeSet<usize>,
    pub dropped_evidence: Vec<usize>,
    pub revision: RevisionTokens,
}

pub fn plain_pass<B: GenerationBackend + ?Sized>(
    doc: &Document,
    ctx: &ClaimContext,
    template: &PromptTemplate,
    cfg: &DecodingConfig,
    backend: &B,
) -> Result<PlainPass, AuditError> {
    let query = BackendQuery::new(build_input(doc, ctx, template)).with_max_new_tokens(cfg.max_new_tokens);
    let pass = run_fact_check_pass(backend, &query)?;
    let parsed = parse_output(&pass.raw, doc, cfg.leniency)?;
    let revision = RevisionTokens::split(&pass).ok_or_else(|| {
        PromptError::MalformedOutput("revision marker not aligned with output tokens".into())
    })?;
    Ok(PlainPass {
        query,
        evidence_ids: parsed.output.evidence_ids,
        dropped_evidence: parsed.dropped_ids,
        revision,
        pass,
    })
}

/// Decodes a revision from an existing plain pass under `cfg`.
pub fn decode_from_pass<B: GenerationBackend + ?Sized>(
    claim: &str,
    plain: &PlainPass,
    cfg: &DecodingConfig,
    backend: &B,
) -> Result<FactCheckResult, AuditError> {
    let mut revision = plain.revision.text();
    let mut interventions = 0;
    let mut low_prob_tags = None;
    match cfg.mode {
        DecodingMode::Plain => {}
        DecodingMode::Thresholded => {
            let outcome = thresholded_edit(
                backend,
                &plain.query,
                &plain.revision.head,
                plain.revision.tokens.clone(),
                cfg.tau,
                cfg.max_iterations,
            )?;
            interventions = outcome.interventions.len();
            revision = plain.revision.text_of(&outcome.tokens);
        }
        DecodingMode::LowProbFlag => {
            low_prob_tags = Some(low_prob_claim_tags(claim, &plain.revision, cfg.tau)?);
        }
    }
    let claim_words = tokenize_words(claim);
    let tags = tag_sequences(&claim_words, &tokenize_words(&revision));
    Ok(FactCheckResult {
        claim: claim.to_string(),
        evidence_ids: plain.evidence_ids.clone(),
        edits: derive_edits(claim, &revision),
        revision,
        tags,
        per_token_probs: Some(plain.revision.probs.clone()),
        low_prob_tags,
        dropped_evidence: plain.dropped_evidence.clone(),
        interventions,
    })
}

/// Shrinks `doc` so the rendered input for `ctx` fits `budget` approximate
/// tokens, keeping the sections `scorer` marks relevant.
pub fn prepare_document(
    doc: &Document,
    ctx: &ClaimContext,
    template: &PromptTemplate,
    budget: usize,
    scorer: &dyn RelevanceScorer,
    options: TruncationOptions,
) -> Result<Truncation, AuditError> {
    let relevant = scorer.relevant_sections(doc, ctx);
    let measure = |d: &Document| approx_tokens(&render_input(d, ctx, template));
    Ok(truncate_document(doc, &relevant, budget, &measure, options)?)
}

/// Evidence and revision for one claim. `doc` must already fit the input
/// budget. Evidence comes from the plain pass; thresholded mode re-decodes
/// only the revision.
pub fn fact_check_sentence<B: GenerationBackend + ?Sized>(
    doc: &Document,
    ctx: &ClaimContext,
    template: &PromptTemplate,
    cfg: &DecodingConfig,
    backend: &B,
) -> Result<FactCheckResult, AuditError> {
    cfg.validate()?;
    let plain = plain_pass(doc, ctx, template, cfg, backend)?;
    decode_from_pass(&ctx.claim, &plain, cfg, backend)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub sentences: Vec<FactCheckResult>,
    pub overall_consistent: bool,
}

impl AuditReport {
    pub fn from_results(sentences: Vec<FactCheckResult>) -> Self {
        let overall_consistent = sentences.iter().all(|r| r.edits.is_empty());
        Self { sentences, overall_consistent }
    }

    /// The published report shape:
    /// `{"sentences": [{"claim", "evidence", "revision", "edits": [...]}], "consistent"}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "sentences": self.sentences.iter().map(result_json).collect::<Vec<_>>(),
            "consistent": self.overall_consistent,
        })
    }
}

/// One sentence entry of the published report shape.
pub fn result_json(r: &FactCheckResult) -> serde_json::Value {
    serde_json::json!({
        "claim": r.claim,
        "evidence": r.evidence_ids,
        "revision": r.revision,
        "edits": r.edits.iter().map(|e| serde_json::json!({
            "start": e.start,
            "end": e.end,
            "replacement": e.replacement,
            "replacement_text": e.replacement_text,
            "status": e.status,
        })).collect::<Vec<_>>(),
        "consistent": r.is_consistent(),
    })
}

/// Checks every sentence of `passage` with all preceding sentences as
/// context. The passage is inconsistent if any sentence receives an edit.
pub fn classify_factuality<B: GenerationBackend + ?Sized>(
    doc: &Document,
    passage: &[String],
    template: &PromptTemplate,
    cfg: &DecodingConfig,
    backend: &B,
) -> Result<AuditReport, AuditError> {
    let results = passage
        .iter()
        .enumerate()
        .map(|(i, claim)| {
            let ctx = ClaimContext::new(passage[..i].to_vec(), claim.clone()).map_err(|e| AuditError::from(e).at_sentence(i))?;
            fact_check_sentence(doc, &ctx, template, cfg, backend).map_err(|e| e.at_sentence(i))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AuditReport::from_results(results))
}
