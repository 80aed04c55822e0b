use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{BackendError, BackendQuery, Completion, GenerationBackend, TokenDistribution, TokenProb};

/// Joins prefix tokens into trie keys in the script file format.
pub const PREFIX_SEPARATOR: char = '\u{241F}';

/// Prefix trie of scripted next-token distributions.
///
/// A prefix with no entry behaves as if the terminal marker had probability 1,
/// so scripts only need to spell out the paths a test exercises.
#[derive(Debug, Clone, PartialEq)]
pub struct MockScript {
    nodes: HashMap<Vec<String>, TokenDistribution>,
    terminal: String,
    context_limit: Option<usize>,
}

impl MockScript {
    pub fn new(terminal: impl Into<String>) -> Self {
        Self { nodes: HashMap::new(), terminal: terminal.into(), context_limit: None }
    }

    pub fn terminal(&self) -> &str {
        &self.terminal
    }

    pub fn with_context_limit(mut self, limit: usize) -> Self {
        self.context_limit = Some(limit);
        self
    }

    /// Adds (or replaces) the distribution after `prefix`.
    pub fn node(mut self, prefix: &[&str], entries: &[(&str, f64)]) -> Self {
        self.insert(
            prefix.iter().map(|s| s.to_string()).collect(),
            entries.iter().map(|(t, p)| TokenProb::new(*t, *p)).collect(),
        )
        .expect("scripted distribution is valid");
        self
    }

    pub fn insert(&mut self, prefix: Vec<String>, entries: Vec<TokenProb>) -> Result<(), BackendError> {
        self.nodes.insert(prefix, TokenDistribution::new(entries)?);
        Ok(())
    }

    /// Scripts a greedy path: after `prefix`, each `(token, prob)` is the top
    /// choice in turn, then the terminal marker. `runner_up` (if any) is listed
    /// second at every step with probability `min(1 - prob, prob)`.
    pub fn path(mut self, prefix: &[&str], steps: &[(&str, f64)], runner_up: Option<&str>) -> Self {
        let mut context: Vec<String> = prefix.iter().map(|s| s.to_string()).collect();
        for (token, prob) in steps {
            let mut entries = vec![TokenProb::new(*token, *prob)];
            if let Some(alt) = runner_up {
                if alt != *token {
                    entries.push(TokenProb::new(alt, (1.0 - prob).min(*prob)));
                }
            }
            self.insert(context.clone(), entries).expect("scripted distribution is valid");
            context.push(token.to_string());
        }
        let terminal = self.terminal.clone();
        self.insert(context, vec![TokenProb::new(terminal, 1.0)]).expect("valid");
        self
    }

    pub fn distribution(&self, prefix: &[String]) -> TokenDistribution {
        self.nodes.get(prefix).cloned().unwrap_or_else(|| {
            TokenDistribution::new(vec![TokenProb::new(self.terminal.clone(), 1.0)]).expect("valid")
        })
    }

    pub fn from_json(json: &str) -> Result<MockBackend, BackendError> {
        let file: ScriptFile =
            serde_json::from_str(json).map_err(|e| BackendError::Protocol(format!("mock script: {e}")))?;
        file.into_backend()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<MockBackend, BackendError> {
        let json = std::fs::read_to_string(path.as_ref())
            .map_err(|e| BackendError::Protocol(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&json)
    }

    pub fn to_json_nodes(&self) -> HashMap<String, Vec<TokenProb>> {
        self.nodes
            .iter()
            .map(|(k, v)| (join_prefix(k), v.entries().to_vec()))
            .collect()
    }
}

fn join_prefix(prefix: &[String]) -> String {
    let mut s = String::new();
    for (i, t) in prefix.iter().enumerate() {
        if i > 0 {
            s.push(PREFIX_SEPARATOR);
        }
        s.push_str(t);
    }
    s
}

fn split_prefix(key: &str) -> Vec<String> {
    if key.is_empty() {
        Vec::new()
    } else {
        key.split(PREFIX_SEPARATOR).map(String::from).collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ScriptFile {
    nodes: HashMap<String, Vec<TokenProb>>,
    #[serde(default = "default_terminal")]
    terminal: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    context_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    routes: Vec<RouteFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RouteFile {
    claim: String,
    nodes: HashMap<String, Vec<TokenProb>>,
}

fn default_terminal() -> String {
    super::DEFAULT_TERMINAL.to_string()
}

fn build_script(
    nodes: HashMap<String, Vec<TokenProb>>,
    terminal: &str,
    context_limit: Option<usize>,
) -> Result<MockScript, BackendError> {
    let mut script = MockScript::new(terminal);
    script.context_limit = context_limit;
    for (key, entries) in nodes {
        script.insert(split_prefix(&key), entries)?;
    }
    Ok(script)
}

impl ScriptFile {
    fn into_backend(self) -> Result<MockBackend, BackendError> {
        let default = build_script(self.nodes, &self.terminal, self.context_limit)?;
        let mut backend = MockBackend::new(default);
        for route in self.routes {
            let script = build_script(route.nodes, &self.terminal, self.context_limit)?;
            backend = backend.route_claim(&route.claim, script);
        }
        Ok(backend)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MockCallStats {
    /// `next_token_probs` calls, including those made inside greedy decoding.
    pub next_token_calls: usize,
    /// `greedy_complete` calls from an empty prefix, i.e. full fact-check passes.
    pub passes: usize,
    pub completions: usize,
}

/// Scripted backend. Queries whose input ends with `CLAIM: <claim>` for a
/// routed claim use that claim's script; everything else uses the default.
#[derive(Debug)]
pub struct MockBackend {
    default: MockScript,
    routes: Vec<(String, MockScript)>,
    next_token_calls: AtomicUsize,
    passes: AtomicUsize,
    completions: AtomicUsize,
}

impl MockBackend {
    pub fn new(default: MockScript) -> Self {
        Self {
            default,
            routes: Vec::new(),
            next_token_calls: AtomicUsize::new(0),
            passes: AtomicUsize::new(0),
            completions: AtomicUsize::new(0),
        }
    }

    pub fn route_claim(mut self, claim: &str, script: MockScript) -> Self {
        self.routes.push((format!("CLAIM: {claim}"), script));
        self
    }

    pub fn stats(&self) -> MockCallStats {
        MockCallStats {
            next_token_calls: self.next_token_calls.load(Ordering::Relaxed),
            passes: self.passes.load(Ordering::Relaxed),
            completions: self.completions.load(Ordering::Relaxed),
        }
    }

    pub fn reset_stats(&self) {
        self.next_token_calls.store(0, Ordering::Relaxed);
        self.passes.store(0, Ordering::Relaxed);
        self.completions.store(0, Ordering::Relaxed);
    }

    fn script_for(&self, query: &BackendQuery) -> &MockScript {
        self.routes
            .iter()
            .find(|(needle, _)| query.input.text.ends_with(needle.as_str()))
            .map(|(_, s)| s)
            .unwrap_or(&self.default)
    }

    pub fn to_json(&self) -> String {
        let file = ScriptFile {
            nodes: self.default.to_json_nodes(),
            terminal: self.default.terminal.clone(),
            context_limit: self.default.context_limit,
            routes: self
                .routes
                .iter()
                .map(|(needle, s)| RouteFile {
                    claim: needle.trim_start_matches("CLAIM: ").to_string(),
                    nodes: s.to_json_nodes(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("serializable")
    }
}

impl GenerationBackend for MockBackend {
    fn terminal(&self) -> &str {
        &self.default.terminal
    }

    fn next_token_probs(
        &self,
        query: &BackendQuery,
        prefix: &[String],
    ) -> Result<TokenDistribution, BackendError> {
        self.next_token_calls.fetch_add(1, Ordering::Relaxed);
        let script = self.script_for(query);
        if let Some(limit) = script.context_limit {
            if prefix.len() >= limit {
                return Err(BackendError::ContextOverflow { len: prefix.len(), limit });
            }
        }
        Ok(script.distribution(prefix))
    }

    fn greedy_complete(&self, query: &BackendQuery, prefix: &[String]) -> Result<Completion, BackendError> {
        self.completions.fetch_add(1, Ordering::Relaxed);
        if prefix.is_empty() {
            self.passes.fetch_add(1, Ordering::Relaxed);
        }
        super::greedy_by_steps(self, query, prefix)
    }
}

/// Splits text into tokens made of leading whitespace plus a non-whitespace
/// run (`"a b"` → `["a", " b"]`). Concatenation restores the input exactly.
pub fn whitespace_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let mut in_word = false;
    for c in text.chars() {
        if c.is_whitespace() {
            if in_word {
                tokens.push(std::mem::take(&mut cur));
                in_word = false;
            }
        } else {
            in_word = true;
        }
        cur.push(c);
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::promptio::ModelInput;

    fn query() -> BackendQuery {
        BackendQuery::new(ModelInput::new("q"))
    }

    #[test]
    fn scripted_distribution() {
        let backend = MockBackend::new(MockScript::new("</s>").node(&[], &[("A", 0.9), ("B", 0.1)]));
        let d = backend.next_token_probs(&query(), &[]).unwrap();
        assert_eq!(d.entries(), &[TokenProb::new("A", 0.9), TokenProb::new("B", 0.1)]);
    }

    #[test]
    fn context_overflow() {
        let backend = MockBackend::new(MockScript::new("</s>").with_context_limit(2));
        let err = backend.next_token_probs(&query(), &["a".into(), "b".into()]).unwrap_err();
        assert_eq!(err, BackendError::ContextOverflow { len: 2, limit: 2 });
    }

    #[test]
    fn greedy_examples() {
        let script = MockScript::new("</s>")
            .node(&[], &[("A", 0.6)])
            .node(&["A"], &[("B", 0.7)])
            .node(&["A", "B"], &[("</s>", 0.8), ("C", 0.2)]);
        let backend = MockBackend::new(script);
        let c = backend.greedy_complete(&query(), &[]).unwrap();
        assert_eq!(c.tokens, vec!["A", "B"]);
        assert_eq!(c.probs, vec![0.6, 0.7]);
        let c = backend.greedy_complete(&query(), &["A".into(), "B".into()]).unwrap();
        assert!(c.tokens.is_empty());
    }

    #[test]
    fn five_step_chain() {
        let steps = [("the", 0.9), (" cat", 0.8), (" sat", 0.7), (" down", 0.95), (".", 0.99)];
        let backend = MockBackend::new(MockScript::new("</s>").path(&[], &steps, Some("<alt>")));
        let c = backend.greedy_complete(&query(), &[]).unwrap();
        assert_eq!(c.tokens, vec!["the", " cat", " sat", " down", "."]);
        assert_eq!(c.probs, vec![0.9, 0.8, 0.7, 0.95, 0.99]);
        // capped by max_new_tokens
        let q = query().with_max_new_tokens(2);
        assert_eq!(backend.greedy_complete(&q, &[]).unwrap().tokens.len(), 2);
    }

    #[test]
    fn routing_and_stats() {
        let backend = MockBackend::new(MockScript::new("</s>").path(&[], &[("d", 1.0)], None))
            .route_claim("x", MockScript::new("</s>").path(&[], &[("routed", 1.0)], None));
        let routed = BackendQuery::new(ModelInput::new("...\nCLAIM: x"));
        assert_eq!(backend.greedy_complete(&routed, &[]).unwrap().tokens, vec!["routed"]);
        assert_eq!(backend.greedy_complete(&query(), &[]).unwrap().tokens, vec!["d"]);
        let stats = backend.stats();
        assert_eq!(stats.passes, 2);
        assert_eq!(stats.next_token_calls, 4);
    }

    #[test]
    fn script_file_roundtrip() {
        let json = r#"{"nodes": {"": [{"token": "A", "prob": 0.9}, {"token": "B", "prob": 0.1}],
                       "A": [{"token": "B", "prob": 1.0}]}, "terminal": "</s>"}"#;
        let backend = MockScript::from_json(json).unwrap();
        assert_eq!(backend.greedy_complete(&query(), &[]).unwrap().tokens, vec!["A", "B"]);
        let again = MockScript::from_json(&backend.to_json()).unwrap();
        assert_eq!(again.default, backend.default);
    }

    #[test]
    fn whitespace_tokens_concat_back() {
        let text = "EVIDENCE: SENT18\nREVISION: His films";
        let toks = whitespace_tokens(text);
        assert_eq!(toks, vec!["EVIDENCE:", " SENT18", "\nREVISION:", " His", " films"]);
        assert_eq!(toks.concat(), text);
    }
}
