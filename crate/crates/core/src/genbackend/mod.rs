//! The generation-backend contract: next-token distributions and greedy
//! completion over opaque string tokens.
//!
//! Two implementations live here: [`MockBackend`], a deterministic trie of
//! scripted distributions, and [`HttpBackend`], a JSON-over-HTTP client.

mod http;
mod mock;

pub use http::{HttpBackend, HttpBackendConfig};
pub use mock::{whitespace_tokens, MockBackend, MockCallStats, MockScript, PREFIX_SEPARATOR};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::promptio::ModelInput;

pub const DEFAULT_MAX_NEW_TOKENS: usize = 150;
pub const DEFAULT_TOP_K: usize = 8;
pub const DEFAULT_TERMINAL: &str = "</s>";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("prefix of {len} tokens exceeds the context limit of {limit}")]
    ContextOverflow { len: usize, limit: usize },
    #[error("backend protocol error: {0}")]
    Protocol(String),
    #[error("invalid token distribution: {0}")]
    InvalidDistribution(String),
}

impl BackendError {
    /// Whether retrying the same request may succeed.
    pub fn is_retriable(&self) -> bool {
        matches!(self, BackendError::Unavailable(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendQuery {
    pub input: ModelInput,
    pub max_new_tokens: usize,
    pub greedy: bool,
}

impl BackendQuery {
    pub fn new(input: ModelInput) -> Self {
        Self { input, max_new_tokens: DEFAULT_MAX_NEW_TOKENS, greedy: true }
    }

    pub fn with_max_new_tokens(mut self, max_new_tokens: usize) -> Self {
        self.max_new_tokens = max_new_tokens.max(1);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenProb {
    pub token: String,
    pub prob: f64,
}

impl TokenProb {
    pub fn new(token: impl Into<String>, prob: f64) -> Self {
        Self { token: token.into(), prob }
    }
}

/// Candidate next tokens, sorted by descending probability. Ties keep the
/// order they were supplied in. May be a top-k truncation of the full
/// vocabulary distribution.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TokenDistribution {
    entries: Vec<TokenProb>,
}

const COVERAGE_SLACK: f64 = 1e-6;

impl TokenDistribution {
    pub fn new(mut entries: Vec<TokenProb>) -> Result<Self, BackendError> {
        for e in &entries {
            if !(0.0..=1.0).contains(&e.prob) {
                return Err(BackendError::InvalidDistribution(format!(
                    "probability {} for token {:?} is outside [0, 1]",
                    e.prob, e.token
                )));
            }
        }
        entries.sort_by(|a, b| b.prob.total_cmp(&a.prob));
        let dist = Self { entries };
        if dist.coverage() > 1.0 + COVERAGE_SLACK {
            return Err(BackendError::InvalidDistribution(format!(
                "probabilities sum to {}",
                dist.coverage()
            )));
        }
        Ok(dist)
    }

    pub fn entries(&self) -> &[TokenProb] {
        &self.entries
    }

    pub fn coverage(&self) -> f64 {
        self.entries.iter().map(|e| e.prob).sum()
    }

    pub fn top(&self) -> Option<&TokenProb> {
        self.entries.first()
    }

    /// Probability of `token`, or `None` when it is outside the listed entries.
    pub fn prob_of(&self, token: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.token == token).map(|e| e.prob)
    }

    /// Highest-probability entry other than `token`.
    pub fn best_excluding(&self, token: &str) -> Option<&TokenProb> {
        self.entries.iter().find(|e| e.token != token)
    }

    pub fn truncate(&mut self, k: usize) {
        self.entries.truncate(k);
    }
}

/// Tokens produced by greedy decoding with the probability of each.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Completion {
    pub tokens: Vec<String>,
    pub probs: Vec<f64>,
}

impl Completion {
    pub fn text(&self) -> String {
        self.tokens.concat()
    }
}

pub trait GenerationBackend: Send + Sync {
    /// Marker token that ends a completion. Never included in returned tokens.
    fn terminal(&self) -> &str;

    fn next_token_probs(
        &self,
        query: &BackendQuery,
        prefix: &[String],
    ) -> Result<TokenDistribution, BackendError>;

    /// Extends `prefix` by argmax decoding until the terminal marker or
    /// `query.max_new_tokens`; returns only the new tokens.
    fn greedy_complete(
        &self,
        query: &BackendQuery,
        prefix: &[String],
    ) -> Result<Completion, BackendError> {
        greedy_by_steps(self, query, prefix)
    }
}

/// Greedy decoding through repeated [`GenerationBackend::next_token_probs`] calls.
pub fn greedy_by_steps<B: GenerationBackend + ?Sized>(
    backend: &B,
    query: &BackendQuery,
    prefix: &[String],
) -> Result<Completion, BackendError> {
    let mut context = prefix.to_vec();
    let mut out = Completion::default();
    while out.tokens.len() < query.max_new_tokens {
        let dist = backend.next_token_probs(query, &context)?;
        let Some(best) = dist.top() else {
            break;
        };
        if best.token == backend.terminal() {
            break;
        }
        out.tokens.push(best.token.clone());
        out.probs.push(best.prob);
        context.push(best.token.clone());
    }
    Ok(out)
}

impl<B: GenerationBackend + ?Sized> GenerationBackend for &B {
    fn terminal(&self) -> &str {
        (**self).terminal()
    }

    fn next_token_probs(&self, query: &BackendQuery, prefix: &[String]) -> Result<TokenDistribution, BackendError> {
        (**self).next_token_probs(query, prefix)
    }

    fn greedy_complete(&self, query: &BackendQuery, prefix: &[String]) -> Result<Completion, BackendError> {
        (**self).greedy_complete(query, prefix)
    }
}

impl<B: GenerationBackend + ?Sized> GenerationBackend for std::sync::Arc<B> {
    fn terminal(&self) -> &str {
        (**self).terminal()
    }

    fn next_token_probs(&self, query: &BackendQuery, prefix: &[String]) -> Result<TokenDistribution, BackendError> {
        (**self).next_token_probs(query, prefix)
    }

    fn greedy_complete(&self, query: &BackendQuery, prefix: &[String]) -> Result<Completion, BackendError> {
        (**self).greedy_complete(query, prefix)
    }
}

/// Raw output of one fact-checking pass.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FactCheckPass {
    pub raw: String,
    pub tokens: Vec<String>,
    pub probs: Vec<f64>,
}

/// Greedy decode of the whole `EVIDENCE: ... REVISION: ...` output, keeping
/// each emitted token's probability.
pub fn run_fact_check_pass<B: GenerationBackend + ?Sized>(
    backend: &B,
    query: &BackendQuery,
) -> Result<FactCheckPass, BackendError> {
    let completion = backend.greedy_complete(query, &[])?;
    Ok(FactCheckPass { raw: completion.text(), tokens: completion.tokens, probs: completion.probs })
}
