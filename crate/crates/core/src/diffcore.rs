//! Word-level diff, error tagging and span extraction at a decoding position.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textmodel::{tokenize_words, WordSequence};

/// One step of an alignment between `a` and `b`, by index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Keep(usize, usize),
    Delete(usize),
    Insert(usize),
}

/// LCS alignment. Among optimal scripts, matches are taken as early as
/// possible in both sequences and deletions are emitted before insertions
/// inside a change block.
pub fn align<T: PartialEq>(a: &[T], b: &[T]) -> Vec<Step> {
    let (n, m) = (a.len(), b.len());
    // suffix[i][j] = LCS length of a[i..] and b[j..]
    let width = m + 1;
    let mut suffix = vec![0u32; (n + 1) * width];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            suffix[i * width + j] = if a[i] == b[j] {
                suffix[(i + 1) * width + j + 1] + 1
            } else {
                suffix[(i + 1) * width + j].max(suffix[i * width + j + 1])
            };
        }
    }
    let at = |i: usize, j: usize| suffix[i * width + j];

    let mut steps = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if a[i] == b[j] && at(i, j) == at(i + 1, j + 1) + 1 {
            steps.push(Step::Keep(i, j));
            i += 1;
            j += 1;
        } else if at(i + 1, j) >= at(i, j + 1) {
            steps.push(Step::Delete(i));
            i += 1;
        } else {
            steps.push(Step::Insert(j));
            j += 1;
        }
    }
    steps.extend((i..n).map(Step::Delete));
    steps.extend((j..m).map(Step::Insert));
    steps
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", content = "word", rename_all = "snake_case")]
pub enum DiffOp {
    Keep(String),
    Delete(String),
    Insert(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DiffScript {
    pub ops: Vec<DiffOp>,
}

impl DiffScript {
    /// Replays Keeps and Deletes.
    pub fn source(&self) -> Vec<&str> {
        self.ops
            .iter()
            .filter_map(|op| match op {
                DiffOp::Keep(w) | DiffOp::Delete(w) => Some(w.as_str()),
                DiffOp::Insert(_) => None,
            })
            .collect()
    }

    /// Replays Keeps and Inserts.
    pub fn target(&self) -> Vec<&str> {
        self.ops
            .iter()
            .filter_map(|op| match op {
                DiffOp::Keep(w) | DiffOp::Insert(w) => Some(w.as_str()),
                DiffOp::Delete(_) => None,
            })
            .collect()
    }

    pub fn keep_count(&self) -> usize {
        self.ops.iter().filter(|op| matches!(op, DiffOp::Keep(_))).count()
    }

    pub fn delete_count(&self) -> usize {
        self.ops.iter().filter(|op| matches!(op, DiffOp::Delete(_))).count()
    }

    pub fn insert_count(&self) -> usize {
        self.ops.iter().filter(|op| matches!(op, DiffOp::Insert(_))).count()
    }
}

pub fn word_diff(a: &WordSequence, b: &WordSequence) -> DiffScript {
    let ops = align(&a.words, &b.words)
        .into_iter()
        .map(|step| match step {
            Step::Keep(i, _) => DiffOp::Keep(a.words[i].clone()),
            Step::Delete(i) => DiffOp::Delete(a.words[i].clone()),
            Step::Insert(j) => DiffOp::Insert(b.words[j].clone()),
        })
        .collect();
    DiffScript { ops }
}

/// Per-word incorrect flags over a claim. Serializes as
/// `{"words": [...], "incorrect": [...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorTags {
    pub words: Vec<String>,
    pub incorrect: Vec<bool>,
}

impl ErrorTags {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn incorrect_count(&self) -> usize {
        self.incorrect.iter().filter(|&&b| b).count()
    }

    pub fn incorrect_indices(&self) -> Vec<usize> {
        self.incorrect
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }
}

/// Claim words deleted or replaced by the revision are incorrect; inserted
/// revision words do not produce tags.
pub fn tag_errors(claim: &str, revision: &str) -> ErrorTags {
    let a = tokenize_words(claim);
    let b = tokenize_words(revision);
    tag_sequences(&a, &b)
}

pub fn tag_sequences(claim: &WordSequence, revision: &WordSequence) -> ErrorTags {
    let mut incorrect = vec![false; claim.len()];
    for step in align(&claim.words, &revision.words) {
        if let Step::Delete(i) = step {
            incorrect[i] = true;
        }
    }
    ErrorTags { words: claim.words.clone(), incorrect }
}

/// Word counts behind the `%Del` / `%Add` statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EditCounts {
    pub claim_words: usize,
    pub deleted: usize,
    pub added: usize,
}

impl std::ops::AddAssign for EditCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.claim_words += rhs.claim_words;
        self.deleted += rhs.deleted;
        self.added += rhs.added;
    }
}

pub fn edit_counts(claim: &str, revision: &str) -> EditCounts {
    let a = tokenize_words(claim);
    let b = tokenize_words(revision);
    let mut counts = EditCounts { claim_words: a.len(), ..Default::default() };
    for step in align(&a.words, &b.words) {
        match step {
            Step::Delete(_) => counts.deleted += 1,
            Step::Insert(_) => counts.added += 1,
            Step::Keep(..) => {}
        }
    }
    counts
}

/// A maximal run of non-Keep steps: claim words `source` replaced by
/// revision words `target` (either may be empty, not both).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangeBlock {
    pub source: Range<usize>,
    pub target: Range<usize>,
}

pub fn change_blocks(steps: &[Step]) -> Vec<ChangeBlock> {
    let mut blocks = Vec::new();
    let (mut i, mut j) = (0, 0);
    let mut open: Option<ChangeBlock> = None;
    for step in steps {
        match *step {
            Step::Keep(a, b) => {
                if let Some(block) = open.take() {
                    blocks.push(block);
                }
                i = a + 1;
                j = b + 1;
            }
            Step::Delete(a) => {
                let block = open.get_or_insert(ChangeBlock { source: i..i, target: j..j });
                block.source.end = a + 1;
                i = a + 1;
            }
            Step::Insert(b) => {
                let block = open.get_or_insert(ChangeBlock { source: i..i, target: j..j });
                block.target.end = b + 1;
                j = b + 1;
            }
        }
    }
    blocks.extend(open);
    blocks
}

/// Span-level change between two token sequences at a position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanDiff<T> {
    pub position: usize,
    pub n_del: usize,
    pub n_add: usize,
    pub repl: Vec<T>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DiffError {
    #[error("sequences agree at position {0}")]
    NoDivergence(usize),
}

/// First contiguous change between `r[t..]` and `r_prime[t..]` (0-based `t`).
/// Replacing `r[t..t + n_del]` by `repl` reproduces `r_prime` up to the point
/// where the two sequences realign; later differences are ignored.
pub fn diff_at_pos<T: PartialEq + Clone>(
    r: &[T],
    r_prime: &[T],
    t: usize,
) -> Result<SpanDiff<T>, DiffError> {
    let tail = r.get(t..).unwrap_or(&[]);
    let tail_prime = r_prime.get(t..).unwrap_or(&[]);
    if tail.first() == tail_prime.first() {
        return Err(DiffError::NoDivergence(t));
    }
    let steps = align(tail, tail_prime);
    let block = change_blocks(&steps)
        .into_iter()
        .next()
        .expect("diverging sequences have a change block");
    debug_assert_eq!((block.source.start, block.target.start), (0, 0));
    Ok(SpanDiff {
        position: t,
        n_del: block.source.len(),
        n_add: block.target.len(),
        repl: tail_prime[block.target].to_vec(),
    })
}
