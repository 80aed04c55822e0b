//! Serialization of backend inputs, parsing of backend outputs, and document
//! truncation to a length budget.
//!
//! Input grammar (newlines are `\n`):
//!
//! ```text
//! {instruction}
//! DOCUMENT: SENT0 {s0} SENT1 {s1} ...
//! SUMMARY: {preceding summary sentences joined by a space}
//! CLAIM: {claim}
//! ```
//!
//! Output grammar: `EVIDENCE: SENT{i}[ SENT{j}...]\nREVISION: {text}`.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::textmodel::{tokenize_words, ClaimContext, Document};

/// Instruction used with the fine-tuned fact-checking models.
pub const FINETUNED_INSTRUCTION: &str = "You are provided a document and its summary. The summary may potentially contain factual errors. The last sentence of the summary is marked as a claim. Find all sentences in the document providing evidence for the claim, and then revise the claim to remove or replace unsupported facts.";

/// Zero-shot instruction for large chat models (longer variant).
pub const ZERO_SHOT_INSTRUCTION_LONG: &str = "You are provided a document and its summary. The summary may potentially contain facts which contradict with the document or are not supported by any evidence in the document. The last sentence of the summary is marked as a claim. Find and list sufficient sentences in the document to provide evidence for the claim. Make sure to provide evidence for all the supported facts in the claim. Then, revise the claim to remove or replace facts which are not supported by the document or are contradicted by it. Only make changes to the text of the claim when necessary. When you add new information to the claim, it must be only to fix a contradictory fact in the claim, and not for changing the style of the text.";

/// Zero-shot instruction for large chat models (shorter variant).
pub const ZERO_SHOT_INSTRUCTION: &str = "You are provided a document and its summary. The summary may potentially contain facts which contradict with the document or are not supported by any evidence in the document. The last sentence of the summary is marked as a claim. Find and list sufficient sentences in the document to provide evidence for the claim, and then revise the claim to remove or replace facts which are not supported by the document or are contradicted by it. When you add new information to the claim, it must be only to fix a contradictory fact in the claim, and not for changing the style of the text.";

/// Summary-generation prompts, kept as configuration defaults for tooling
/// that produces summaries to audit.
pub const SUMMARY_PROMPT_FREEFORM: &str = "Generate a summary for the following document in brief. When creating the summary, only use information that is present in the document. Generate the summary in free-form text without using bullet points.";
pub const SUMMARY_PROMPT: &str = "Generate a summary for the following document in brief. When creating the summary, only use information that is present in the document.";

pub const DOCUMENT_MARKER: &str = "DOCUMENT: ";
pub const SUMMARY_MARKER: &str = "SUMMARY: ";
pub const CLAIM_MARKER: &str = "CLAIM: ";
pub const EVIDENCE_MARKER: &str = "EVIDENCE:";
pub const REVISION_MARKER: &str = "REVISION:";

/// Input budget and output length used for training the fact-checkers.
pub const DEFAULT_INPUT_BUDGET: usize = 3050;
pub const DEFAULT_OUTPUT_BUDGET: usize = 150;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("malformed model output: {0}")]
    MalformedOutput(String),
    #[error("model output cites SENT{0}, which is not in the document")]
    UnknownSentenceId(usize),
    #[error("document does not fit the budget of {budget} (needs {needed} after dropping all irrelevant sections)")]
    BudgetUnreachable { budget: usize, needed: usize },
    #[error("template file: {0}")]
    Template(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub instruction: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self { instruction: FINETUNED_INSTRUCTION.to_string() }
    }
}

impl PromptTemplate {
    pub fn new(instruction: impl Into<String>) -> Self {
        Self { instruction: instruction.into() }
    }

    /// Reads `{"instruction": "..."}`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path)
            .map_err(|e| PromptError::Template(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&json).map_err(|e| PromptError::Template(format!("{}: {e}", path.display())))
    }
}

/// A rendered backend input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelInput {
    pub text: String,
    pub length_estimate: usize,
}

impl ModelInput {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let length_estimate = approx_tokens(&text);
        Self { text, length_estimate }
    }

    pub fn measured(text: impl Into<String>, measure: &dyn Fn(&str) -> usize) -> Self {
        let text = text.into();
        let length_estimate = measure(&text);
        Self { text, length_estimate }
    }
}

/// Rough subword-token estimate used when the backend exposes no tokenizer:
/// one unit per word or punctuation mark, plus one per 4 characters beyond
/// the first 4 of a long word.
pub fn approx_tokens(text: &str) -> usize {
    tokenize_words(text)
        .words
        .iter()
        .map(|w| 1 + w.chars().count().saturating_sub(1) / 4)
        .sum()
}

pub fn char_count(text: &str) -> usize {
    text.chars().count()
}

/// `SENT0 {s0} SENT1 {s1} ...`
pub fn render_document_body(doc: &Document) -> String {
    let mut out = String::new();
    for (i, s) in doc.sentences().iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str("SENT");
        out.push_str(&s.id.to_string());
        out.push(' ');
        out.push_str(&s.text);
    }
    out
}

pub fn build_input(doc: &Document, ctx: &ClaimContext, template: &PromptTemplate) -> ModelInput {
    ModelInput::new(render_input(doc, ctx, template))
}

pub fn render_input(doc: &Document, ctx: &ClaimContext, template: &PromptTemplate) -> String {
    let mut text = String::with_capacity(template.instruction.len() + 64);
    text.push_str(&template.instruction);
    text.push('\n');
    text.push_str(DOCUMENT_MARKER);
    text.push_str(&render_document_body(doc));
    text.push('\n');
    text.push_str(SUMMARY_MARKER);
    text.push_str(&ctx.preceding_summary.join(" "));
    text.push('\n');
    text.push_str(CLAIM_MARKER);
    text.push_str(&ctx.claim);
    text
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModelOutput {
    pub evidence_ids: BTreeSet<usize>,
    pub revision: String,
}

/// Renders evidence and revision in the output grammar.
pub fn render_output(evidence_ids: &BTreeSet<usize>, revision: &str) -> String {
    let mut out = String::from(EVIDENCE_MARKER);
    for id in evidence_ids {
        out.push_str(" SENT");
        out.push_str(&id.to_string());
    }
    out.push('\n');
    out.push_str(REVISION_MARKER);
    out.push(' ');
    out.push_str(revision);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Leniency {
    /// Unknown ids and stray evidence tokens are errors.
    Strict,
    /// Unknown ids and stray tokens are dropped and reported.
    #[default]
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedOutput {
    pub output: ModelOutput,
    /// Cited ids not present in the document (lenient mode only).
    pub dropped_ids: Vec<usize>,
    /// Evidence-list items that were not `SENT{k}` (lenient mode only).
    pub stray_tokens: Vec<String>,
}

/// Parses `EVIDENCE: SENT{i} ...\nREVISION: {text}`. Evidence items may be
/// separated by whitespace or commas; duplicates collapse.
pub fn parse_output(raw: &str, doc: &Document, leniency: Leniency) -> Result<ParsedOutput, PromptError> {
    let ev_at = raw
        .find(EVIDENCE_MARKER)
        .ok_or_else(|| PromptError::MalformedOutput(format!("missing {EVIDENCE_MARKER}")))?;
    let after_ev = ev_at + EVIDENCE_MARKER.len();
    let rev_rel = raw[after_ev..]
        .find(REVISION_MARKER)
        .ok_or_else(|| PromptError::MalformedOutput(format!("missing {REVISION_MARKER}")))?;
    let evidence_text = &raw[after_ev..after_ev + rev_rel];
    let revision = raw[after_ev + rev_rel + REVISION_MARKER.len()..].trim().to_string();

    let mut parsed = ParsedOutput::default();
    for item in evidence_text.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()) {
        let id = item.strip_prefix("SENT").and_then(|n| n.parse::<usize>().ok());
        match (id, leniency) {
            (Some(id), _) if doc.contains_id(id) => {
                parsed.output.evidence_ids.insert(id);
            }
            (Some(id), Leniency::Strict) => return Err(PromptError::UnknownSentenceId(id)),
            (Some(id), Leniency::Lenient) => {
                warn!(id, "dropping evidence id outside the document");
                if !parsed.dropped_ids.contains(&id) {
                    parsed.dropped_ids.push(id);
                }
            }
            (None, Leniency::Strict) => {
                return Err(PromptError::MalformedOutput(format!("unexpected evidence item {item:?}")))
            }
            (None, Leniency::Lenient) => parsed.stray_tokens.push(item.to_string()),
        }
    }
    parsed.output.revision = revision;
    Ok(parsed)
}

/// Picks the sections relevant to a claim when gold evidence links are unknown.
pub trait RelevanceScorer {
    fn relevant_sections(&self, doc: &Document, ctx: &ClaimContext) -> BTreeSet<usize>;
}

/// Scores sections by how many distinct content words they share with the
/// claim and its preceding summary, keeping the top `max_sections` with a
/// non-zero score.
#[derive(Debug, Clone)]
pub struct LexicalOverlap {
    pub max_sections: usize,
    pub min_word_len: usize,
}

impl Default for LexicalOverlap {
    fn default() -> Self {
        Self { max_sections: 3, min_word_len: 3 }
    }
}

impl LexicalOverlap {
    fn content_words(&self, text: &str) -> HashSet<String> {
        tokenize_words(text)
            .words
            .into_iter()
            .filter(|w| w.chars().count() >= self.min_word_len && w.chars().any(char::is_alphanumeric))
            .map(|w| w.to_lowercase())
            .collect()
    }

    pub fn scores(&self, doc: &Document, ctx: &ClaimContext) -> Vec<usize> {
        let mut query = self.content_words(&ctx.claim);
        for s in &ctx.preceding_summary {
            query.extend(self.content_words(s));
        }
        (0..doc.sections().len())
            .map(|i| {
                let mut words = HashSet::new();
                for s in doc.section_sentences(i) {
                    words.extend(self.content_words(&s.text));
                }
                words.intersection(&query).count()
            })
            .collect()
    }
}

impl RelevanceScorer for LexicalOverlap {
    fn relevant_sections(&self, doc: &Document, ctx: &ClaimContext) -> BTreeSet<usize> {
        let scores = self.scores(doc, ctx);
        let mut order: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] > 0).collect();
        order.sort_by(|&a, &b| scores[b].cmp(&scores[a]).then(a.cmp(&b)));
        order.into_iter().take(self.max_sections).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruncationOptions {
    /// When dropping irrelevant sections is not enough, remove sentences from
    /// the end of the document until it fits.
    pub hard_truncate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truncation {
    pub document: Document,
    /// Indices (into the input document's sections) dropped, in drop order.
    pub dropped_sections: Vec<usize>,
    /// Sentence ids removed by hard truncation, in removal order.
    pub removed_tail: Vec<usize>,
    pub length: usize,
    pub warnings: Vec<String>,
}

/// Drops irrelevant sections, largest first, until `measure(doc) <= budget`.
/// Sentence ids of kept sentences are unchanged. `measure` receives the
/// candidate document, so it can account for the full rendered input.
pub fn truncate_document(
    doc: &Document,
    relevant_sections: &BTreeSet<usize>,
    budget: usize,
    measure: &dyn Fn(&Document) -> usize,
    options: TruncationOptions,
) -> Result<Truncation, PromptError> {
    let mut length = measure(doc);
    let mut result = Truncation {
        document: doc.clone(),
        dropped_sections: Vec::new(),
        removed_tail: Vec::new(),
        length,
        warnings: Vec::new(),
    };
    if length <= budget {
        return Ok(result);
    }

    // Drop order is fixed up front so that a smaller budget drops a superset.
    let section_len = |i: usize| measure(&doc.retain(|sec, _| sec == i));
    let mut candidates: Vec<(usize, usize)> = (0..doc.sections().len())
        .filter(|i| !relevant_sections.contains(i))
        .map(|i| (section_len(i), i))
        .collect();
    candidates.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)));

    let mut dropped: BTreeSet<usize> = BTreeSet::new();
    let sections = doc.sections().len();
    for (_, section) in candidates {
        if length <= budget || dropped.len() + 1 == sections {
            break;
        }
        dropped.insert(section);
        result.dropped_sections.push(section);
        result.document = doc.retain(|sec, _| !dropped.contains(&sec));
        length = measure(&result.document);
    }

    if length > budget {
        if !options.hard_truncate {
            return Err(PromptError::BudgetUnreachable { budget, needed: length });
        }
        let mut kept: Vec<usize> = result.document.sentences().iter().map(|s| s.id).collect();
        while length > budget {
            if kept.len() <= 1 {
                return Err(PromptError::BudgetUnreachable { budget, needed: length });
            }
            let id = kept.pop().expect("more than one sentence kept");
            result.removed_tail.push(id);
            let cutoff = id;
            result.document = doc.retain(|sec, s| !dropped.contains(&sec) && s.id < cutoff);
            length = measure(&result.document);
        }
        let msg = format!(
            "document {} hard-truncated: removed {} trailing sentences to fit budget {budget}",
            doc.doc_id(),
            result.removed_tail.len()
        );
        warn!("{msg}");
        result.warnings.push(msg);
    }
    result.length = length;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc2() -> Document {
        Document::from_sentences("d", vec!["Alpha one.", "Beta two."]).unwrap()
    }

    #[test]
    fn empty_summary_renders_bare_marker() {
        let ctx = ClaimContext::new(vec![], "Alpha.").unwrap();
        let text = render_input(&doc2(), &ctx, &PromptTemplate::new("Do it."));
        assert_eq!(
            text,
            "Do it.\nDOCUMENT: SENT0 Alpha one. SENT1 Beta two.\nSUMMARY: \nCLAIM: Alpha."
        );
        assert_eq!(text.matches("DOCUMENT:").count(), 1);
        assert_eq!(text.matches("SUMMARY:").count(), 1);
        assert_eq!(text.matches("CLAIM:").count(), 1);
    }

    #[test]
    fn parse_examples() {
        let doc = Document::from_sentences("d", (0..20).map(|i| format!("s{i}")).collect()).unwrap();
        let p = parse_output("EVIDENCE: SENT18\nREVISION: His films include \"Blue Story\".", &doc, Leniency::Strict)
            .unwrap();
        assert_eq!(p.output.evidence_ids, BTreeSet::from([18]));
        assert_eq!(p.output.revision, "His films include \"Blue Story\".");

        let p = parse_output("EVIDENCE:\nREVISION: X", &doc, Leniency::Strict).unwrap();
        assert!(p.output.evidence_ids.is_empty());
        assert_eq!(p.output.revision, "X");

        assert!(matches!(
            parse_output("REVISION: X", &doc, Leniency::Lenient),
            Err(PromptError::MalformedOutput(_))
        ));
        assert!(matches!(
            parse_output("EVIDENCE: SENT1", &doc, Leniency::Lenient),
            Err(PromptError::MalformedOutput(_))
        ));
    }

    #[test]
    fn parse_commas_duplicates_and_unknown_ids() {
        let doc = doc2();
        let p = parse_output("EVIDENCE: SENT1, SENT0 SENT1 SENT7\nREVISION: ok", &doc, Leniency::Lenient).unwrap();
        assert_eq!(p.output.evidence_ids, BTreeSet::from([0, 1]));
        assert_eq!(p.dropped_ids, vec![7]);
        assert!(matches!(
            parse_output("EVIDENCE: SENT7\nREVISION: ok", &doc, Leniency::Strict),
            Err(PromptError::UnknownSentenceId(7))
        ));
    }

    #[test]
    fn empty_revision_is_full_deletion() {
        let p = parse_output("EVIDENCE: SENT0\nREVISION:", &doc2(), Leniency::Strict).unwrap();
        assert_eq!(p.output.revision, "");
    }

    #[test]
    fn render_output_forms() {
        assert_eq!(render_output(&BTreeSet::from([3, 2]), "x"), "EVIDENCE: SENT2 SENT3\nREVISION: x");
        assert_eq!(render_output(&BTreeSet::new(), "x"), "EVIDENCE:\nREVISION: x");
    }

    fn three_sections() -> Document {
        Document::from_sections(
            "d",
            [
                (Some("a".to_string()), vec!["one two three"]),
                (Some("b".to_string()), vec!["four five six seven", "eight"]),
                (Some("c".to_string()), vec!["nine ten"]),
            ],
        )
        .unwrap()
    }

    fn words_measure(d: &Document) -> usize {
        d.sentences().iter().map(|s| s.text.split_whitespace().count()).sum()
    }

    #[test]
    fn relevance_constraint_forces_drops() {
        let doc = three_sections();
        let t = truncate_document(
            &doc,
            &BTreeSet::from([0]),
            3,
            &words_measure,
            TruncationOptions { hard_truncate: false },
        )
        .unwrap();
        assert_eq!(t.dropped_sections, vec![1, 2]);
        let ids: Vec<_> = t.document.sentences().iter().map(|s| s.id).collect();
        assert_eq!(ids, vec![0]);
    }

    #[test]
    fn hard_truncation_removes_tail() {
        let doc = three_sections();
        let all = BTreeSet::from([0, 1, 2]);
        let err = truncate_document(&doc, &all, 5, &words_measure, TruncationOptions { hard_truncate: false });
        assert!(matches!(err, Err(PromptError::BudgetUnreachable { budget: 5, needed: 10 })));
        let t = truncate_document(&doc, &all, 5, &words_measure, TruncationOptions { hard_truncate: true }).unwrap();
        assert_eq!(t.removed_tail, vec![3, 2, 1]);
        assert_eq!(t.length, 3);
        assert_eq!(t.warnings.len(), 1);
    }

    #[test]
    fn lexical_overlap_picks_matching_sections() {
        let doc = Document::from_sections(
            "d",
            [
                (None, vec!["The film premiered in London."]),
                (None, vec!["Cooking recipes abound."]),
                (None, vec!["Critics praised the film Blue Story."]),
            ],
        )
        .unwrap();
        let ctx = ClaimContext::new(vec![], "His films include Blue Story.").unwrap();
        let scorer = LexicalOverlap { max_sections: 1, min_word_len: 3 };
        assert_eq!(scorer.relevant_sections(&doc, &ctx), BTreeSet::from([2]));
    }

    #[test]
    fn approx_tokens_counts_long_words_more() {
        assert_eq!(approx_tokens("a b"), 2);
        assert_eq!(approx_tokens("abcdefghi"), 3);
        assert_eq!(approx_tokens(""), 0);
    }
}
