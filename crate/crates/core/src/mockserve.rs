//! Deterministic in-process backend implementing the wire protocol.
//!
//! Used by tests and by the demo path of the CLI so the whole pipeline runs
//! without any model. Every request is recorded in a call log; faults are
//! injected at fixed call indices.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tiny_http::{Header, Method, Response, Server};

use crate::protocol::{
    EmbedRequest, EmbedResponse, ErrorResponse, GenerateRequest, GenerateResponse, HealthResponse,
    TranslateRequest, TranslateResponse, EMBED_PATH, GENERATE_PATH, HEALTH_PATH, TRANSLATE_PATH,
};

/// Seed mixed into every hashed embedding.
const EMBED_SEED: &[u8] = b"trilingua-mock-embedder-v1";

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranslatorBehavior {
    /// Returns the input with its language tag removed.
    #[default]
    Identity,
    /// Like identity, prefixed with `[src→tgt] `.
    TagPrefix,
    /// Looks up the untagged input; unknown inputs pass through.
    Dictionary(BTreeMap<String, String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorBehavior {
    #[default]
    Echo,
    /// Completions keyed by [`prompt_key`]; unknown prompts get a 404.
    Fixed(BTreeMap<String, String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderBehavior {
    Hash { dim: usize },
}

impl Default for EmbedderBehavior {
    fn default() -> Self {
        EmbedderBehavior::Hash { dim: 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// Respond with this status and an `{"error": ...}` body.
    Status(u16),
    /// Respond 200 with a body that is not protocol JSON.
    Malformed,
    /// Sleep before answering normally.
    DelayMs(u64),
    /// Answer with the last item dropped (translate/embed only).
    Short,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fault {
    /// Zero-based index into the global call sequence.
    pub call_index: usize,
    pub kind: FaultKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockBehavior {
    pub translator: TranslatorBehavior,
    pub generator: GeneratorBehavior,
    pub embedder: EmbedderBehavior,
    pub faults: Vec<Fault>,
    /// Fixed delay applied to every request.
    pub delay_ms: u64,
}

impl MockBehavior {
    /// Named presets accepted by `serve-mock --behavior`.
    pub fn preset(name: &str) -> Option<Self> {
        let translator = match name {
            "identity" => TranslatorBehavior::Identity,
            "tag_prefix" | "tag-prefix" => TranslatorBehavior::TagPrefix,
            _ => return None,
        };
        Some(Self {
            translator,
            ..Self::default()
        })
    }

    fn fault_at(&self, index: usize) -> Option<FaultKind> {
        self.faults
            .iter()
            .find(|f| f.call_index == index)
            .map(|f| f.kind)
    }
}

/// Key used by [`GeneratorBehavior::Fixed`]: hex SHA-256 of the prompt.
pub fn prompt_key(prompt: &str) -> String {
    Sha256::digest(prompt.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Removes a leading `<2xx>` tag and the space after it.
pub fn strip_language_tag(text: &str) -> &str {
    let Some(rest) = text.strip_prefix("<2") else {
        return text;
    };
    let Some(end) = rest.find('>') else {
        return text;
    };
    let code = &rest[..end];
    if code.is_empty() || !code.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        return text;
    }
    let after = &rest[end + 1..];
    after.strip_prefix(' ').unwrap_or(after)
}

/// Deterministic unit vector for `token`.
pub fn hash_embedding(token: &str, dim: usize) -> Vec<f64> {
    let mut hasher = Sha256::new();
    hasher.update(EMBED_SEED);
    hasher.update(token.as_bytes());
    let seed: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    } else if let Some(first) = v.first_mut() {
        *first = 1.0;
    }
    v
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoggedCall {
    pub index: usize,
    pub method: String,
    pub path: String,
    pub body: String,
}

#[derive(Debug, Error)]
pub enum MockError {
    #[error("cannot bind mock server on {addr}: {message}")]
    Bind { addr: String, message: String },
}

pub struct MockServer {
    addr: SocketAddr,
    server: Arc<Server>,
    log: Arc<Mutex<Vec<LoggedCall>>>,
    accept: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn call_log(&self) -> Vec<LoggedCall> {
        self.log.lock().expect("call log poisoned").clone()
    }

    pub fn calls_to(&self, path: &str) -> usize {
        self.log
            .lock()
            .expect("call log poisoned")
            .iter()
            .filter(|c| c.path == path)
            .count()
    }

    /// Blocks until the server is shut down from another thread.
    pub fn wait(mut self) {
        if let Some(handle) = self.accept.take() {
            let _ = handle.join();
        }
    }

    pub fn shutdown(mut self) -> Vec<LoggedCall> {
        self.stop();
        self.call_log()
    }

    fn stop(&mut self) {
        self.server.unblock();
        if let Some(handle) = self.accept.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Starts a mock on `127.0.0.1:port` (port 0 picks a free port).
pub fn serve_mock(behavior: MockBehavior, port: u16) -> Result<MockServer, MockError> {
    serve_mock_on(behavior, &format!("127.0.0.1:{port}"))
}

pub fn serve_mock_on(behavior: MockBehavior, addr: &str) -> Result<MockServer, MockError> {
    let server = Server::http(addr).map_err(|e| MockError::Bind {
        addr: addr.to_string(),
        message: e.to_string(),
    })?;
    let bound = server
        .server_addr()
        .to_ip()
        .expect("mock server listens on TCP");
    let server = Arc::new(server);
    let log = Arc::new(Mutex::new(Vec::new()));
    let behavior = Arc::new(behavior);
    let accept = {
        let server = Arc::clone(&server);
        let log = Arc::clone(&log);
        std::thread::spawn(move || {
            for request in server.incoming_requests() {
                let log = Arc::clone(&log);
                let behavior = Arc::clone(&behavior);
                std::thread::spawn(move || handle(request, &behavior, &log));
            }
        })
    };
    Ok(MockServer {
        addr: bound,
        server,
        log,
        accept: Some(accept),
    })
}

fn json_response(status: u16, body: String) -> Response<std::io::Cursor<Vec<u8>>> {
    let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
    Response::from_string(body)
        .with_status_code(status)
        .with_header(header)
}

fn error_body(message: impl Into<String>) -> String {
    serde_json::to_string(&ErrorResponse {
        error: message.into(),
    })
    .expect("serializable")
}

fn handle(mut request: tiny_http::Request, behavior: &MockBehavior, log: &Mutex<Vec<LoggedCall>>) {
    let mut body = String::new();
    let read_ok = request.as_reader().read_to_string(&mut body).is_ok();
    let path = request.url().split('?').next().unwrap_or_default().to_string();
    let method = request.method().clone();
    let index = {
        let mut log = log.lock().expect("call log poisoned");
        let index = log.len();
        log.push(LoggedCall {
            index,
            method: method.to_string(),
            path: path.clone(),
            body: body.clone(),
        });
        index
    };
    if behavior.delay_ms > 0 {
        std::thread::sleep(Duration::from_millis(behavior.delay_ms));
    }
    let fault = behavior.fault_at(index);
    let (status, payload) = match fault {
        Some(FaultKind::Status(code)) => (code, error_body(format!("injected fault at call {index}"))),
        Some(FaultKind::Malformed) => (200, "this is not protocol json".to_string()),
        _ if !read_ok => (400, error_body("request body is not UTF-8")),
        other => {
            if let Some(FaultKind::DelayMs(ms)) = other {
                std::thread::sleep(Duration::from_millis(ms));
            }
            respond(behavior, &method, &path, &body, other == Some(FaultKind::Short))
        }
    };
    let _ = request.respond(json_response(status, payload));
}

fn respond(behavior: &MockBehavior, method: &Method, path: &str, body: &str, short: bool) -> (u16, String) {
    match (method, path) {
        (Method::Get, HEALTH_PATH) => (
            200,
            serde_json::to_string(&HealthResponse {
                status: "ok".into(),
                role: "mock".into(),
            })
            .expect("serializable"),
        ),
        (Method::Post, TRANSLATE_PATH) => match serde_json::from_str::<TranslateRequest>(body) {
            Ok(req) => {
                let mut translations: Vec<String> = req
                    .texts
                    .iter()
                    .map(|t| translate_one(&behavior.translator, &req.src, &req.tgt, t))
                    .collect();
                if short {
                    translations.pop();
                }
                (200, serde_json::to_string(&TranslateResponse { translations }).expect("serializable"))
            }
            Err(e) => (400, error_body(format!("bad translate request: {e}"))),
        },
        (Method::Post, GENERATE_PATH) => match serde_json::from_str::<GenerateRequest>(body) {
            Ok(req) => match &behavior.generator {
                GeneratorBehavior::Echo => (
                    200,
                    serde_json::to_string(&GenerateResponse { completion: req.prompt }).expect("serializable"),
                ),
                GeneratorBehavior::Fixed(map) => match map.get(&prompt_key(&req.prompt)) {
                    Some(text) => (
                        200,
                        serde_json::to_string(&GenerateResponse { completion: text.clone() })
                            .expect("serializable"),
                    ),
                    None => (404, error_body("no fixed completion for prompt")),
                },
            },
            Err(e) => (400, error_body(format!("bad generate request: {e}"))),
        },
        (Method::Post, EMBED_PATH) => match serde_json::from_str::<EmbedRequest>(body) {
            Ok(req) => {
                let EmbedderBehavior::Hash { dim } = behavior.embedder;
                let mut vectors: Vec<Vec<f64>> = req.tokens.iter().map(|t| hash_embedding(t, dim)).collect();
                if short {
                    vectors.pop();
                }
                (200, serde_json::to_string(&EmbedResponse { vectors }).expect("serializable"))
            }
            Err(e) => (400, error_body(format!("bad embed request: {e}"))),
        },
        _ => (404, error_body(format!("no route for {method} {path}"))),
    }
}

fn translate_one(translator: &TranslatorBehavior, src: &str, tgt: &str, text: &str) -> String {
    let payload = strip_language_tag(text);
    match translator {
        TranslatorBehavior::Identity => payload.to_string(),
        TranslatorBehavior::TagPrefix => format!("[{src}→{tgt}] {payload}"),
        TranslatorBehavior::Dictionary(map) => map.get(payload).cloned().unwrap_or_else(|| payload.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tag_stripping() {
        assert_eq!(strip_language_tag("<2en> hola"), "hola");
        assert_eq!(strip_language_tag("<2eng_Latn>x"), "x");
        assert_eq!(strip_language_tag("<b> bold"), "<b> bold");
        assert_eq!(strip_language_tag("<2> x"), "<2> x");
        assert_eq!(strip_language_tag("plain"), "plain");
    }

    #[test]
    fn translators() {
        assert_eq!(translate_one(&TranslatorBehavior::Identity, "hi", "en", "<2en> hola"), "hola");
        assert_eq!(translate_one(&TranslatorBehavior::TagPrefix, "hi", "en", "x"), "[hi→en] x");
        let dict = TranslatorBehavior::Dictionary([("hola".to_string(), "hello".to_string())].into());
        assert_eq!(translate_one(&dict, "es", "en", "<2en> hola"), "hello");
        assert_eq!(translate_one(&dict, "es", "en", "<2en> adios"), "adios");
    }

    #[test]
    fn hash_embedding_is_unit_and_deterministic() {
        let a = hash_embedding("fever", 32);
        assert_eq!(a.len(), 32);
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert_eq!(a, hash_embedding("fever", 32));
        assert_ne!(a, hash_embedding("rash", 32));
    }

    #[test]
    fn presets() {
        assert_eq!(MockBehavior::preset("tag-prefix").unwrap().translator, TranslatorBehavior::TagPrefix);
        assert!(MockBehavior::preset("nope").is_none());
    }

    #[test]
    fn behavior_from_toml() {
        let b: MockBehavior = toml::from_str(
            r#"
            translator = "tag_prefix"
            embedder = { hash = { dim = 4 } }
            delay_ms = 5
            [[faults]]
            call_index = 1
            kind = { status = 503 }
            [[faults]]
            call_index = 2
            kind = "malformed"
            "#,
        )
        .unwrap();
        assert_eq!(b.translator, TranslatorBehavior::TagPrefix);
        assert_eq!(b.embedder, EmbedderBehavior::Hash { dim: 4 });
        assert_eq!(b.fault_at(1), Some(FaultKind::Status(503)));
        assert_eq!(b.fault_at(2), Some(FaultKind::Malformed));
        assert_eq!(b.fault_at(3), None);
    }

    #[test]
    fn port_in_use_is_an_error() {
        let first = serve_mock(MockBehavior::default(), 0).unwrap();
        let err = serve_mock(MockBehavior::default(), first.addr().port()).err().unwrap();
        assert!(matches!(err, MockError::Bind { .. }));
    }
}
