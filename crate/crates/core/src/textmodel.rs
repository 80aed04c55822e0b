//! Documents, claims and word sequences.
//!
//! A [`Document`] is a flat, id-ordered list of [`Sentence`]s grouped into
//! contiguous [`Section`]s. Freshly built documents number their sentences
//! `0..n`; documents produced by truncation keep the original ids, so gaps
//! are allowed there and evidence ids stay stable.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TextError {
    #[error("document has no non-whitespace content")]
    EmptyDocument,
    #[error("sentence {0} is empty")]
    EmptySentence(usize),
    #[error("sentence ids must strictly increase (saw {prev} then {next})")]
    UnorderedIds { prev: usize, next: usize },
    #[error("claim is empty")]
    EmptyClaim,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: usize,
    pub text: String,
}

/// A titled run of sentences. `sentence_ids` is always a contiguous id range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub title: Option<String>,
    pub sentence_ids: Range<usize>,
}

/// Input to [`Document::from_parts`]: one section with explicitly numbered sentences.
#[derive(Debug, Clone)]
pub struct SectionParts {
    pub title: Option<String>,
    pub sentences: Vec<Sentence>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    doc_id: String,
    sections: Vec<Section>,
    sentences: Vec<Sentence>,
}

impl Document {
    /// Builds a document from titled sections of raw sentence strings, numbering
    /// sentences consecutively from 0 in reading order. Sentences are kept verbatim.
    pub fn from_sections<I, S>(doc_id: impl Into<String>, sections: I) -> Result<Self, TextError>
    where
        I: IntoIterator<Item = (Option<String>, Vec<S>)>,
        S: Into<String>,
    {
        let mut next_id = 0;
        let parts = sections
            .into_iter()
            .map(|(title, texts)| SectionParts {
                title,
                sentences: texts
                    .into_iter()
                    .map(|t| {
                        let s = Sentence { id: next_id, text: t.into() };
                        next_id += 1;
                        s
                    })
                    .collect(),
            })
            .collect::<Vec<_>>();
        if next_id == 0 {
            return Err(TextError::EmptyDocument);
        }
        Self::from_parts(doc_id, parts)
    }

    /// Single untitled section of pre-split sentences.
    pub fn from_sentences<S: Into<String>>(
        doc_id: impl Into<String>,
        sentences: Vec<S>,
    ) -> Result<Self, TextError> {
        Self::from_sections(doc_id, [(None, sentences)])
    }

    /// Builds a document from explicitly numbered sentences. Ids must strictly
    /// increase across the whole document and each section's ids must be
    /// contiguous; gaps between sections are permitted.
    pub fn from_parts(doc_id: impl Into<String>, parts: Vec<SectionParts>) -> Result<Self, TextError> {
        let mut sections = Vec::with_capacity(parts.len());
        let mut sentences: Vec<Sentence> = Vec::new();
        for part in parts {
            // a section with an internal id gap becomes several contiguous runs
            let mut run: Option<Range<usize>> = None;
            for s in part.sentences {
                if s.text.trim().is_empty() {
                    return Err(TextError::EmptySentence(s.id));
                }
                if let Some(prev) = sentences.last() {
                    if s.id <= prev.id {
                        return Err(TextError::UnorderedIds { prev: prev.id, next: s.id });
                    }
                }
                run = match run {
                    Some(r) if r.end == s.id => Some(r.start..s.id + 1),
                    Some(r) => {
                        sections.push(Section { title: part.title.clone(), sentence_ids: r });
                        Some(s.id..s.id + 1)
                    }
                    None => Some(s.id..s.id + 1),
                };
                sentences.push(s);
            }
            if let Some(r) = run {
                sections.push(Section { title: part.title, sentence_ids: r });
            }
        }
        if sentences.is_empty() {
            return Err(TextError::EmptyDocument);
        }
        Ok(Self { doc_id: doc_id.into(), sections, sentences })
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn sections(&self) -> &[Section] {
        &self.sections
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&Sentence> {
        self.sentences
            .binary_search_by_key(&id, |s| s.id)
            .ok()
            .map(|i| &self.sentences[i])
    }

    pub fn contains_id(&self, id: usize) -> bool {
        self.get(id).is_some()
    }

    /// True when ids are exactly `0..len` (no truncation gaps).
    pub fn is_contiguous(&self) -> bool {
        self.sentences.iter().enumerate().all(|(i, s)| s.id == i)
    }

    /// Sentences of section `index`, in order.
    pub fn section_sentences(&self, index: usize) -> &[Sentence] {
        let Some(section) = self.sections.get(index) else {
            return &[];
        };
        let lo = self.sentences.partition_point(|s| s.id < section.sentence_ids.start);
        let hi = self.sentences.partition_point(|s| s.id < section.sentence_ids.end);
        &self.sentences[lo..hi]
    }

    /// Keeps only sentences for which `keep` returns true, preserving ids,
    /// titles and section boundaries. Sections left empty disappear.
    pub fn retain(&self, mut keep: impl FnMut(usize, &Sentence) -> bool) -> Document {
        let parts = self
            .sections
            .iter()
            .enumerate()
            .map(|(i, sec)| SectionParts {
                title: sec.title.clone(),
                sentences: self
                    .section_sentences(i)
                    .iter()
                    .filter(|s| keep(i, s))
                    .cloned()
                    .collect(),
            })
            .collect();
        Document::from_parts(self.doc_id.clone(), parts).expect("subset of a valid document is valid")
    }

    pub fn to_record(&self) -> DocumentRecord {
        DocumentRecord::Sections {
            doc_id: self.doc_id.clone(),
            sections: (0..self.sections.len())
                .map(|i| {
                    let ids = &self.sections[i].sentence_ids;
                    let expected = if i == 0 { 0 } else { self.sections[i - 1].sentence_ids.end };
                    SectionRecord {
                        title: self.sections[i].title.clone(),
                        first_id: (ids.start != expected).then_some(ids.start),
                        sentences: self.section_sentences(i).iter().map(|s| s.text.clone()).collect(),
                    }
                })
                .collect(),
        }
    }
}

/// JSONL ingestion record: either pre-sectioned sentences or raw text that
/// goes through the rule-based splitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DocumentRecord {
    Sections { doc_id: String, sections: Vec<SectionRecord> },
    Text { doc_id: String, text: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionRecord {
    pub title: Option<String>,
    /// Id of the first sentence when it does not follow on from the
    /// previous section (documents with elided sentences).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_id: Option<usize>,
    pub sentences: Vec<String>,
}

impl DocumentRecord {
    pub fn into_document(self) -> Result<Document, TextError> {
        match self {
            DocumentRecord::Sections { doc_id, sections } => {
                if sections.iter().all(|s| s.first_id.is_none()) {
                    return Document::from_sections(doc_id, sections.into_iter().map(|s| (s.title, s.sentences)));
                }
                let mut next = 0;
                let parts = sections
                    .into_iter()
                    .map(|s| {
                        next = s.first_id.unwrap_or(next);
                        SectionParts {
                            title: s.title,
                            sentences: s
                                .sentences
                                .into_iter()
                                .map(|text| {
                                    next += 1;
                                    Sentence { id: next - 1, text }
                                })
                                .collect(),
                        }
                    })
                    .collect();
                Document::from_parts(doc_id, parts)
            }
            DocumentRecord::Text { doc_id, text } => {
                segment_document(doc_id, SegmentInput::Raw(&text), None)
            }
        }
    }
}

impl Serialize for Document {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_record().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Document {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        DocumentRecord::deserialize(deserializer)?
            .into_document()
            .map_err(serde::de::Error::custom)
    }
}

pub enum SegmentInput<'a> {
    Raw(&'a str),
    PreSplit(Vec<String>),
}

/// Lines starting with this prefix open a new section titled by the rest of
/// the line (e.g. `"# "` for markdown-style headings).
#[derive(Debug, Clone, Copy)]
pub struct HeadingPrefix<'a>(pub &'a str);

/// Segments a document. Pre-split input is taken verbatim; raw input goes
/// through [`split_sentences`], optionally cut into sections at heading lines.
pub fn segment_document(
    doc_id: impl Into<String>,
    input: SegmentInput<'_>,
    headings: Option<HeadingPrefix<'_>>,
) -> Result<Document, TextError> {
    let doc_id = doc_id.into();
    match input {
        SegmentInput::PreSplit(sentences) => {
            if sentences.iter().all(|s| s.trim().is_empty()) {
                return Err(TextError::EmptyDocument);
            }
            Document::from_sentences(doc_id, sentences)
        }
        SegmentInput::Raw(raw) => {
            if raw.trim().is_empty() {
                return Err(TextError::EmptyDocument);
            }
            let mut sections: Vec<(Option<String>, Vec<String>)> = Vec::new();
            match headings {
                None => sections.push((None, split_sentences(raw))),
                Some(HeadingPrefix(prefix)) => {
                    let mut title = None;
                    let mut body = String::new();
                    for line in raw.lines() {
                        if let Some(rest) = line.trim_start().strip_prefix(prefix) {
                            let sents = split_sentences(&body);
                            if !sents.is_empty() || title.is_some() {
                                sections.push((title.take(), sents));
                            }
                            title = Some(rest.trim().to_string());
                            body.clear();
                        } else {
                            body.push_str(line);
                            body.push('\n');
                        }
                    }
                    sections.push((title, split_sentences(&body)));
                }
            }
            if sections.iter().all(|(_, s)| s.is_empty()) {
                return Err(TextError::EmptyDocument);
            }
            Document::from_sections(doc_id, sections)
        }
    }
}

const ABBREVIATIONS: &[&str] = &[
    "mr.", "mrs.", "ms.", "dr.", "prof.", "st.", "jr.", "sr.", "vs.", "etc.", "e.g.", "i.e.",
    "inc.", "ltd.", "co.", "no.", "fig.", "u.s.", "u.k.", "mt.", "gen.", "col.", "lt.", "sgt.",
];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '}', '\u{201D}', '\u{2019}', '\u{00BB}'];

/// Rule-based sentence splitter: a sentence ends at `.`, `!` or `?` (plus any
/// closing quotes or brackets) followed by whitespace or end of input, unless
/// the word carrying the period is a known abbreviation. Blank lines are hard
/// boundaries. Whitespace inside a sentence is collapsed to single spaces.
pub fn split_sentences(raw: &str) -> Vec<String> {
    let mut out = Vec::new();
    for block in paragraphs(raw) {
        let words: Vec<&str> = block.split_whitespace().collect();
        let mut current: Vec<&str> = Vec::new();
        for w in words {
            current.push(w);
            if ends_sentence(w) {
                out.push(current.join(" "));
                current.clear();
            }
        }
        if !current.is_empty() {
            out.push(current.join(" "));
        }
    }
    out
}

fn paragraphs(raw: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut cur = String::new();
    for line in raw.lines() {
        if line.trim().is_empty() {
            if !cur.trim().is_empty() {
                blocks.push(std::mem::take(&mut cur));
            }
            cur.clear();
        } else {
            cur.push_str(line);
            cur.push('\n');
        }
    }
    if !cur.trim().is_empty() {
        blocks.push(cur);
    }
    blocks
}

fn ends_sentence(word: &str) -> bool {
    let core = word.trim_end_matches(CLOSERS);
    let Some(last) = core.chars().last() else {
        return false;
    };
    match last {
        '!' | '?' => true,
        '.' => !ABBREVIATIONS.contains(&core.to_lowercase().trim_start_matches(['(', '"', '\''])),
        _ => false,
    }
}

/// Preceding summary sentences plus the sentence under check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimContext {
    pub preceding_summary: Vec<String>,
    pub claim: String,
}

impl ClaimContext {
    pub fn new(preceding_summary: Vec<String>, claim: impl Into<String>) -> Result<Self, TextError> {
        let claim = claim.into();
        if claim.trim().is_empty() {
            return Err(TextError::EmptyClaim);
        }
        Ok(Self { preceding_summary, claim })
    }
}

/// Words of a string with their byte ranges in the source.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WordSequence {
    pub words: Vec<String>,
    pub source_offsets: Vec<Range<usize>>,
}

impl WordSequence {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Byte span in the source covering words `range` (empty range maps to a
    /// zero-width position before word `range.start`, or end of the last word).
    pub fn byte_span(&self, range: Range<usize>) -> Range<usize> {
        if range.is_empty() {
            let at = match self.source_offsets.get(range.start) {
                Some(r) => r.start,
                None => self.source_offsets.last().map(|r| r.end).unwrap_or(0),
            };
            return at..at;
        }
        self.source_offsets[range.start].start..self.source_offsets[range.end - 1].end
    }
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric()
}

/// Splits on whitespace, then peels leading and trailing punctuation off each
/// chunk, one token per punctuation character.
pub fn tokenize_words(text: &str) -> WordSequence {
    let mut seq = WordSequence::default();
    let push = |seq: &mut WordSequence, start: usize, end: usize| {
        seq.words.push(text[start..end].to_string());
        seq.source_offsets.push(start..end);
    };
    let mut pos = 0;
    for chunk in text.split_whitespace() {
        let start = pos + text[pos..].find(chunk).expect("chunk comes from text");
        let end = start + chunk.len();
        pos = end;

        let chars: Vec<(usize, char)> = chunk.char_indices().collect();
        let mut lo = 0;
        while lo < chars.len() && is_punct(chars[lo].1) {
            lo += 1;
        }
        if lo == chars.len() {
            for (off, c) in &chars {
                push(&mut seq, start + off, start + off + c.len_utf8());
            }
            continue;
        }
        let mut hi = chars.len();
        while hi > lo && is_punct(chars[hi - 1].1) {
            hi -= 1;
        }
        for (off, c) in &chars[..lo] {
            push(&mut seq, start + off, start + off + c.len_utf8());
        }
        let core_end = chars.get(hi).map(|(o, _)| *o).unwrap_or(chunk.len());
        push(&mut seq, start + chars[lo].0, start + core_end);
        for (off, c) in &chars[hi..] {
            push(&mut seq, start + off, start + off + c.len_utf8());
        }
    }
    seq
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presplit_keeps_sentences_verbatim() {
        let doc = segment_document(
            "ward",
            SegmentInput::PreSplit(vec!["Micheal Ward".into(), "Early life.".into()]),
            None,
        )
        .unwrap();
        assert_eq!(doc.get(0).unwrap().text, "Micheal Ward");
        assert_eq!(doc.get(1).unwrap().text, "Early life.");
        assert!(doc.is_contiguous());
    }

    #[test]
    fn empty_input_is_rejected() {
        assert_eq!(
            segment_document("x", SegmentInput::Raw(""), None).unwrap_err(),
            TextError::EmptyDocument
        );
        assert_eq!(
            segment_document("x", SegmentInput::Raw(" \n\t "), None).unwrap_err(),
            TextError::EmptyDocument
        );
        assert_eq!(
            segment_document("x", SegmentInput::PreSplit(vec![]), None).unwrap_err(),
            TextError::EmptyDocument
        );
    }

    #[test]
    fn rule_splitter_golden() {
        let doc = segment_document("x", SegmentInput::Raw("A. B. C."), None).unwrap();
        let texts: Vec<_> = doc.sentences().iter().map(|s| (s.id, s.text.as_str())).collect();
        assert_eq!(texts, vec![(0, "A."), (1, "B."), (2, "C.")]);
    }

    #[test]
    fn splitter_respects_abbreviations_and_quotes() {
        let s = split_sentences("Dr. Smith arrived. He said \"Go!\" Then   left\nquickly.\n\nHeading");
        assert_eq!(s, vec!["Dr. Smith arrived.", "He said \"Go!\"", "Then left quickly.", "Heading"]);
        assert_eq!(split_sentences("It cost 3.5 dollars. Fine"), vec!["It cost 3.5 dollars.", "Fine"]);
    }

    #[test]
    fn heading_prefix_creates_sections() {
        let raw = "Intro line. Second.\n# Early life\nBorn in 1997.\n# Career\nActor. Model.";
        let doc = segment_document("x", SegmentInput::Raw(raw), Some(HeadingPrefix("# "))).unwrap();
        assert_eq!(doc.sections().len(), 3);
        assert_eq!(doc.sections()[1].title.as_deref(), Some("Early life"));
        assert_eq!(doc.sections()[2].sentence_ids, 3..5);
        assert_eq!(doc.section_sentences(2)[1].text, "Model.");
    }

    #[test]
    fn retain_preserves_ids() {
        let doc = Document::from_sections(
            "d",
            [(Some("a".to_string()), vec!["s0", "s1"]), (None, vec!["s2", "s3", "s4"])],
        )
        .unwrap();
        let sub = doc.retain(|_, s| s.id != 1 && s.id != 3);
        let ids: Vec<_> = sub.sentences().iter().map(|s| s.id).collect();
        assert_eq!(ids, vec![0, 2, 4]);
        assert!(!sub.is_contiguous());
        assert_eq!(sub.get(4).unwrap().text, "s4");
        // section 1 lost its middle sentence: it splits into two contiguous runs
        assert_eq!(sub.sections().len(), 3);
    }

    #[test]
    fn unordered_parts_are_rejected() {
        let err = Document::from_parts(
            "d",
            vec![SectionParts {
                title: None,
                sentences: vec![
                    Sentence { id: 3, text: "a".into() },
                    Sentence { id: 2, text: "b".into() },
                ],
            }],
        )
        .unwrap_err();
        assert_eq!(err, TextError::UnorderedIds { prev: 3, next: 2 });
    }

    #[test]
    fn tokenizer_golden_on_claim_text() {
        let seq = tokenize_words("His films include \"Blue Story\".");
        assert_eq!(seq.words, vec!["His", "films", "include", "\"", "Blue", "Story", "\"", "."]);
    }

    #[test]
    fn tokenizer_edge_cases() {
        assert!(tokenize_words("").is_empty());
        let seq = tokenize_words("a  b");
        assert_eq!(seq.words, vec!["a", "b"]);
        assert_eq!(seq.source_offsets, vec![0..1, 3..4]);
        let seq = tokenize_words("Ward's \u{201C}Top Boy\u{201D} -- (2019)");
        assert_eq!(seq.words, vec!["Ward's", "\u{201C}", "Top", "Boy", "\u{201D}", "-", "-", "(", "2019", ")"]);
    }

    #[test]
    fn document_json_forms() {
        let rec: DocumentRecord =
            serde_json::from_str(r#"{"doc_id": "d", "text": "One. Two."}"#).unwrap();
        assert_eq!(rec.into_document().unwrap().len(), 2);
        let doc: Document = serde_json::from_str(
            r#"{"doc_id": "d", "sections": [{"title": null, "sentences": ["a", "b"]}, {"title": "T", "sentences": ["c"]}]}"#,
        )
        .unwrap();
        assert_eq!(doc.sections()[1].sentence_ids, 2..3);
        let back: Document = serde_json::from_str(&serde_json::to_string(&doc).unwrap()).unwrap();
        assert_eq!(back, doc);
    }

    #[test]
    fn gapped_ids_survive_json() {
        let parts = vec![SectionParts {
            title: None,
            sentences: vec![
                Sentence { id: 0, text: "a".into() },
                Sentence { id: 1, text: "b".into() },
                Sentence { id: 17, text: "c".into() },
            ],
        }];
        let doc = Document::from_parts("g", parts).unwrap();
        let json = serde_json::to_string(&doc).unwrap();
        assert!(json.contains("\"first_id\":17"));
        let back: Document = serde_json::from_str(&json).unwrap();
        assert_eq!(back, doc);
        assert!(Document::from_parts("e", vec![]).is_err());
    }
}
