use std::time::Duration;

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{BackendError, BackendQuery, Completion, GenerationBackend, TokenDistribution, TokenProb};

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    pub base_url: String,
    pub timeout: Duration,
    /// Attempts after the first one for transient failures.
    pub retries: u32,
    pub backoff: Duration,
    pub top_k: usize,
    pub terminal: String,
}

impl HttpBackendConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            timeout: Duration::from_secs(60),
            retries: 3,
            backoff: Duration::from_millis(200),
            top_k: super::DEFAULT_TOP_K,
            terminal: super::DEFAULT_TERMINAL.to_string(),
        }
    }
}

/// Client for the JSON backend protocol:
///
/// * `POST /v1/next_token {"input", "prefix"} -> {"top": [{"token", "prob"}]}`
/// * `POST /v1/generate {"input", "prefix", "max_new_tokens"} -> {"tokens", "probs"}`
///
/// Both calls are idempotent reads, so transient failures (transport errors,
/// 429 and 5xx) are retried with exponential backoff.
pub struct HttpBackend {
    config: HttpBackendConfig,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct NextTokenRequest<'a> {
    input: &'a str,
    prefix: &'a [String],
}

#[derive(Deserialize)]
struct NextTokenResponse {
    top: Vec<TokenProb>,
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    input: &'a str,
    prefix: &'a [String],
    max_new_tokens: usize,
}

#[derive(Deserialize)]
struct GenerateResponse {
    tokens: Vec<String>,
    probs: Vec<f64>,
}

#[derive(Deserialize, Default)]
struct ErrorBody {
    #[serde(default)]
    limit: Option<usize>,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        Self { config, agent }
    }

    pub fn config(&self) -> &HttpBackendConfig {
        &self.config
    }

    fn post<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
        &self,
        path: &str,
        body: &Req,
        prefix_len: usize,
    ) -> Result<Resp, BackendError> {
        let url = format!("{}{}", self.config.base_url, path);
        let mut attempt = 0;
        loop {
            let err = match self.agent.post(&url).send_json(body) {
                Ok(resp) => {
                    return resp
                        .into_json::<Resp>()
                        .map_err(|e| BackendError::Protocol(format!("{path}: {e}")));
                }
                Err(ureq::Error::Status(413, resp)) => {
                    let body: ErrorBody = resp.into_json().unwrap_or_default();
                    return Err(BackendError::ContextOverflow {
                        len: prefix_len,
                        limit: body.limit.unwrap_or(prefix_len),
                    });
                }
                Err(ureq::Error::Status(code, resp)) if code == 429 || code >= 500 => {
                    BackendError::Unavailable(format!(
                        "{path}: HTTP {code}: {}",
                        resp.into_string().unwrap_or_default()
                    ))
                }
                Err(ureq::Error::Status(code, resp)) => {
                    return Err(BackendError::Protocol(format!(
                        "{path}: HTTP {code}: {}",
                        resp.into_string().unwrap_or_default()
                    )));
                }
                Err(ureq::Error::Transport(t)) => BackendError::Unavailable(format!("{path}: {t}")),
            };
            if attempt >= self.config.retries {
                return Err(err);
            }
            let delay = self.config.backoff * 2u32.saturating_pow(attempt);
            warn!(%err, attempt, ?delay, "retrying backend request");
            std::thread::sleep(delay);
            attempt += 1;
        }
    }
}

impl GenerationBackend for HttpBackend {
    fn terminal(&self) -> &str {
        &self.config.terminal
    }

    fn next_token_probs(&self, query: &BackendQuery, prefix: &[String]) -> Result<TokenDistribution, BackendError> {
        let resp: NextTokenResponse = self.post(
            "/v1/next_token",
            &NextTokenRequest { input: &query.input.text, prefix },
            prefix.len(),
        )?;
        let mut dist = TokenDistribution::new(resp.top)?;
        dist.truncate(self.config.top_k);
        Ok(dist)
    }

    fn greedy_complete(&self, query: &BackendQuery, prefix: &[String]) -> Result<Completion, BackendError> {
        let resp: GenerateResponse = self.post(
            "/v1/generate",
            &GenerateRequest { input: &query.input.text, prefix, max_new_tokens: query.max_new_tokens },
            prefix.len(),
        )?;
        if resp.tokens.len() != resp.probs.len() {
            return Err(BackendError::Protocol(format!(
                "/v1/generate returned {} tokens but {} probs",
                resp.tokens.len(),
                resp.probs.len()
            )));
        }
        let mut completion = Completion { tokens: resp.tokens, probs: resp.probs };
        if let Some(cut) = completion.tokens.iter().position(|t| *t == self.config.terminal) {
            completion.tokens.truncate(cut);
            completion.probs.truncate(cut);
        }
        completion.tokens.truncate(query.max_new_tokens);
        completion.probs.truncate(query.max_new_tokens);
        Ok(completion)
    }
}
