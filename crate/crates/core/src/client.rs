//! Blocking clients for the translate, generate and embed backend roles.
//!
//! Every call is chunked into batches of `batch_size`, retried on timeouts,
//! transport failures and 5xx responses with exponential backoff, and checked
//! for protocol conformance (item counts, vector dimensions). Clients are
//! `Send + Sync` and may be shared across pipeline workers.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LanguageCode;
use crate::protocol::{
    Decoding, EmbedRequest, EmbedResponse, GenerateRequest, GenerateResponse, HealthResponse,
    TranslateRequest, TranslateResponse, EMBED_PATH, GENERATE_PATH, HEALTH_PATH, TRANSLATE_PATH,
};

const EXCERPT_CHARS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    TranslateFwd,
    TranslateRev,
    Generate,
    Embed,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::TranslateFwd => "translate_fwd",
            Role::TranslateRev => "translate_rev",
            Role::Generate => "generate",
            Role::Embed => "embed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendEndpoint {
    pub role: Role,
    pub base_url: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub batch_size: usize,
}

impl BackendEndpoint {
    pub fn new(role: Role, base_url: impl Into<String>) -> Self {
        Self {
            role,
            base_url: base_url.into(),
            timeout: Duration::from_secs(60),
            max_retries: 3,
            batch_size: 8,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.timeout.is_zero() {
            return Err(format!("{}: timeout must be positive", self.role));
        }
        if self.batch_size == 0 {
            return Err(format!("{}: batch_size must be at least 1", self.role));
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(format!("{}: base_url must be an http(s) URL", self.role));
        }
        Ok(())
    }
}

/// Decoding settings sent with every translate/generate request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodingPolicy {
    pub mode: Decoding,
    pub max_new_tokens: usize,
}

impl DecodingPolicy {
    pub fn greedy(max_new_tokens: usize) -> Self {
        Self {
            mode: Decoding::Greedy,
            max_new_tokens,
        }
    }
}

/// Exponential backoff with equal jitter: the n-th retry waits between half
/// and all of `min(cap, base * factor^n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backoff {
    pub base: Duration,
    pub factor: f64,
    pub cap: Duration,
    pub jitter: bool,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            base: Duration::from_millis(200),
            factor: 2.0,
            cap: Duration::from_secs(5),
            jitter: true,
        }
    }
}

impl Backoff {
    pub fn none() -> Self {
        Self {
            base: Duration::ZERO,
            factor: 1.0,
            cap: Duration::ZERO,
            jitter: false,
        }
    }

    pub fn delay(&self, retry: u32) -> Duration {
        let raw = self.base.as_secs_f64() * self.factor.powi(retry as i32);
        let capped = raw.min(self.cap.as_secs_f64());
        let secs = if self.jitter && capped > 0.0 {
            capped * rand::rng().random_range(0.5..=1.0)
        } else {
            capped
        };
        Duration::from_secs_f64(secs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FailureKind {
    Timeout,
    Transport(String),
    Status { code: u16, excerpt: String },
    Malformed { excerpt: String },
}

impl FailureKind {
    fn retryable(&self) -> bool {
        match self {
            FailureKind::Timeout | FailureKind::Transport(_) => true,
            FailureKind::Status { code, .. } => *code >= 500 || *code == 429,
            FailureKind::Malformed { .. } => false,
        }
    }
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureKind::Timeout => f.write_str("timed out"),
            FailureKind::Transport(msg) => write!(f, "transport error: {msg}"),
            FailureKind::Status { code, excerpt } => write!(f, "HTTP {code}: {excerpt}"),
            FailureKind::Malformed { excerpt } => write!(f, "malformed response: {excerpt}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("{role}: {message}")]
    Precondition { role: Role, message: String },
    #[error("{role}: request failed after {attempts} attempt(s): {kind}")]
    Request {
        role: Role,
        attempts: u32,
        kind: FailureKind,
    },
    #[error("{role}: protocol error: {message}")]
    Protocol { role: Role, message: String },
}

impl BackendError {
    pub fn role(&self) -> Role {
        match self {
            BackendError::Precondition { role, .. }
            | BackendError::Request { role, .. }
            | BackendError::Protocol { role, .. } => *role,
        }
    }
}

fn excerpt(text: &str) -> String {
    let mut out: String = text.chars().take(EXCERPT_CHARS).collect();
    if text.chars().count() > EXCERPT_CHARS {
        out.push('…');
    }
    out
}

#[derive(Debug, Clone)]
pub struct BackendClient {
    endpoint: BackendEndpoint,
    backoff: Backoff,
    codes: BTreeMap<LanguageCode, String>,
    agent: ureq::Agent,
}

impl BackendClient {
    pub fn new(endpoint: BackendEndpoint) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(endpoint.timeout))
            .http_status_as_error(false)
            .build();
        Self {
            endpoint,
            backoff: Backoff::default(),
            codes: BTreeMap::new(),
            agent: config.into(),
        }
    }

    pub fn with_backoff(mut self, backoff: Backoff) -> Self {
        self.backoff = backoff;
        self
    }

    /// Backend-specific language codes sent as `src`/`tgt`; unmapped
    /// languages use their two-letter code.
    pub fn with_language_codes(mut self, codes: BTreeMap<LanguageCode, String>) -> Self {
        self.codes = codes;
        self
    }

    pub fn endpoint(&self) -> &BackendEndpoint {
        &self.endpoint
    }

    fn role(&self) -> Role {
        self.endpoint.role
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.endpoint.base_url.trim_end_matches('/'), path)
    }

    fn code(&self, lang: LanguageCode) -> String {
        self.codes
            .get(&lang)
            .cloned()
            .unwrap_or_else(|| lang.as_str().to_string())
    }

    fn precondition(&self, message: impl Into<String>) -> BackendError {
        BackendError::Precondition {
            role: self.role(),
            message: message.into(),
        }
    }

    fn protocol(&self, message: impl Into<String>) -> BackendError {
        BackendError::Protocol {
            role: self.role(),
            message: message.into(),
        }
    }

    fn attempt(&self, path: &str, body: Option<&str>) -> Result<String, FailureKind> {
        let url = self.url(path);
        let response = match body {
            Some(body) => self
                .agent
                .post(&url)
                .header("content-type", "application/json")
                .send(body),
            None => self.agent.get(&url).call(),
        };
        let response = response.map_err(|e| match e {
            ureq::Error::Timeout(_) => FailureKind::Timeout,
            ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => FailureKind::Timeout,
            other => FailureKind::Transport(other.to_string()),
        })?;
        let code = response.status().as_u16();
        let text = response
            .into_body()
            .read_to_string()
            .map_err(|e| FailureKind::Transport(e.to_string()))?;
        if !(200..300).contains(&code) {
            return Err(FailureKind::Status {
                code,
                excerpt: excerpt(&text),
            });
        }
        Ok(text)
    }

    fn exchange<T: DeserializeOwned>(&self, path: &str, body: Option<&str>) -> Result<T, BackendError> {
        let mut attempts = 0;
        loop {
            attempts += 1;
            let outcome = self.attempt(path, body).and_then(|text| {
                serde_json::from_str::<T>(&text).map_err(|_| FailureKind::Malformed {
                    excerpt: excerpt(&text),
                })
            });
            match outcome {
                Ok(value) => return Ok(value),
                Err(kind) if kind.retryable() && attempts <= self.endpoint.max_retries => {
                    let delay = self.backoff.delay(attempts - 1);
                    log::debug!("{} {path}: {kind}; retrying in {delay:?}", self.role());
                    std::thread::sleep(delay);
                }
                Err(kind) => {
                    return Err(BackendError::Request {
                        role: self.role(),
                        attempts,
                        kind,
                    })
                }
            }
        }
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, request: &Req) -> Result<Resp, BackendError> {
        let body = serde_json::to_string(request).expect("protocol types serialize");
        self.exchange(path, Some(&body))
    }

    fn check_policy(&self, policy: &DecodingPolicy) -> Result<(), BackendError> {
        if policy.max_new_tokens == 0 {
            return Err(self.precondition("max_new_tokens must be positive"));
        }
        Ok(())
    }

    pub fn health(&self) -> Result<HealthResponse, BackendError> {
        self.exchange(HEALTH_PATH, None)
    }

    /// Translates already-tagged texts, preserving order.
    pub fn translate(
        &self,
        texts: &[String],
        src: LanguageCode,
        tgt: LanguageCode,
        policy: DecodingPolicy,
    ) -> Result<Vec<String>, BackendError> {
        if texts.is_empty() {
            return Err(self.precondition("translate called with no texts"));
        }
        self.check_policy(&policy)?;
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.endpoint.batch_size) {
            let request = TranslateRequest {
                src: self.code(src),
                tgt: self.code(tgt),
                texts: chunk.to_vec(),
                max_new_tokens: policy.max_new_tokens,
                decoding: policy.mode,
            };
            let response: TranslateResponse = self.post(TRANSLATE_PATH, &request)?;
            if response.translations.len() != chunk.len() {
                return Err(self.protocol(format!(
                    "length mismatch: sent {} texts, received {} translations",
                    chunk.len(),
                    response.translations.len()
                )));
            }
            out.extend(response.translations);
        }
        Ok(out)
    }

    pub fn generate(&self, prompt: &str, policy: DecodingPolicy) -> Result<String, BackendError> {
        if prompt.is_empty() {
            return Err(self.precondition("generate called with an empty prompt"));
        }
        self.check_policy(&policy)?;
        let request = GenerateRequest {
            prompt: prompt.to_string(),
            max_new_tokens: policy.max_new_tokens,
            decoding: policy.mode,
        };
        let response: GenerateResponse = self.post(GENERATE_PATH, &request)?;
        Ok(response.completion)
    }

    /// One vector per token; all vectors share one dimension.
    pub fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        if tokens.is_empty() {
            return Err(self.precondition("embed called with no tokens"));
        }
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(tokens.len());
        for chunk in tokens.chunks(self.endpoint.batch_size) {
            let request = EmbedRequest {
                tokens: chunk.to_vec(),
            };
            let response: EmbedResponse = self.post(EMBED_PATH, &request)?;
            if response.vectors.len() != chunk.len() {
                return Err(self.protocol(format!(
                    "length mismatch: sent {} tokens, received {} vectors",
                    chunk.len(),
                    response.vectors.len()
                )));
            }
            out.extend(response.vectors);
        }
        let dim = out[0].len();
        if let Some(bad) = out.iter().position(|v| v.len() != dim) {
            return Err(self.protocol(format!(
                "inconsistent dimensions: vector 0 has {dim}, vector {bad} has {}",
                out[bad].len()
            )));
        }
        Ok(out)
    }
}
