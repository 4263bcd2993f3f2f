#![allow(dead_code)]

use std::path::{Path, PathBuf};

use trilingua::client::{Backoff, BackendClient, BackendEndpoint, DecodingPolicy, Role};
use trilingua::corpus::{DialogueRecord, LanguageCode, TaskKind, Turn};
use trilingua::mockserve::{serve_mock, EmbedderBehavior, GeneratorBehavior, MockBehavior, MockServer, TranslatorBehavior};
use trilingua::pipeline::{Pipeline, PipelineConfig};
use trilingua::protocol::{EMBED_PATH, GENERATE_PATH, HEALTH_PATH, TRANSLATE_PATH};

pub fn record(id: &str, lang: LanguageCode, turns: &[(&str, &str)], tasks: &[TaskKind], questions: &[&str]) -> DialogueRecord {
    DialogueRecord {
        id: id.into(),
        lang,
        turns: turns
            .iter()
            .map(|(s, u)| Turn {
                speaker: s.to_string(),
                utterance: u.to_string(),
            })
            .collect(),
        tasks: tasks.to_vec(),
        questions: questions.iter().map(|q| q.to_string()).collect(),
    }
}

pub fn behavior(translator: TranslatorBehavior) -> MockBehavior {
    MockBehavior {
        translator,
        ..MockBehavior::default()
    }
}

pub fn config_for(server: &MockServer, parallelism: usize) -> PipelineConfig {
    let mut config = PipelineConfig::with_base_url(&server.base_url());
    config.parallelism = parallelism;
    config.backoff = Backoff::none();
    config
}

pub fn mock_pipeline(behavior: MockBehavior, parallelism: usize) -> (MockServer, Pipeline) {
    let server = serve_mock(behavior, 0).expect("mock starts");
    let pipeline = Pipeline::new(config_for(&server, parallelism)).expect("valid config");
    (server, pipeline)
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn golden(name: &str) -> Result<String, String> {
    std::fs::read_to_string(golden_dir().join(name))
        .map(|s| s.trim_end().to_string())
        .map_err(|e| format!("{name}: {e}"))
}

fn expect_eq(name: &str, actual: &str) -> Result<(), String> {
    let expected = golden(name)?;
    if expected == actual {
        Ok(())
    } else {
        Err(format!("{name} differs\n expected: {expected}\n   actual: {actual}"))
    }
}

fn raw_post(base: &str, path: &str, body: &str) -> Result<(u16, String), String> {
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let resp = agent
        .post(&format!("{base}{path}"))
        .header("content-type", "application/json")
        .send(body)
        .map_err(|e| e.to_string())?;
    let status = resp.status().as_u16();
    let text = resp.into_body().read_to_string().map_err(|e| e.to_string())?;
    Ok((status, text))
}

fn raw_get(base: &str, path: &str) -> Result<(u16, String), String> {
    let resp = ureq::get(&format!("{base}{path}")).call().map_err(|e| e.to_string())?;
    let status = resp.status().as_u16();
    let text = resp.into_body().read_to_string().map_err(|e| e.to_string())?;
    Ok((status, text))
}

/// Client request bodies and mock response bodies for every endpoint,
/// compared byte for byte against the files in tests/golden.
pub fn check_protocol_goldens() -> Result<(), String> {
    let mock = MockBehavior {
        translator: TranslatorBehavior::TagPrefix,
        generator: GeneratorBehavior::Echo,
        embedder: EmbedderBehavior::Hash { dim: 4 },
        ..MockBehavior::default()
    };
    let server = serve_mock(mock, 0).map_err(|e| e.to_string())?;
    let base = server.base_url();
    let client = |role| BackendClient::new(BackendEndpoint::new(role, base.clone())).with_backoff(Backoff::none());

    let translated = client(Role::TranslateFwd)
        .translate(
            &["<2en> नमस्ते".to_string(), "<2en> धन्यवाद".to_string()],
            LanguageCode::Hi,
            LanguageCode::En,
            DecodingPolicy::greedy(2048),
        )
        .map_err(|e| e.to_string())?;
    let completion = client(Role::Generate)
        .generate("Patient: I have a fever.", DecodingPolicy::greedy(3000))
        .map_err(|e| e.to_string())?;
    let vectors = client(Role::Embed)
        .embed(&["fever".to_string(), "cough".to_string()])
        .map_err(|e| e.to_string())?;
    let health = client(Role::Generate).health().map_err(|e| e.to_string())?;
    if translated != ["[hi→en] नमस्ते", "[hi→en] धन्यवाद"] || completion != "Patient: I have a fever." {
        return Err(format!("unexpected decoded values: {translated:?} {completion:?}"));
    }
    if vectors.len() != 2 || vectors.iter().any(|v| v.len() != 4) || health.status != "ok" {
        return Err(format!("unexpected embed/health values: {vectors:?} {health:?}"));
    }

    let log = server.call_log();
    let body_for = |path: &str| {
        log.iter()
            .find(|c| c.path == path)
            .map(|c| c.body.clone())
            .ok_or_else(|| format!("no call to {path}"))
    };
    expect_eq("translate_request.json", &body_for(TRANSLATE_PATH)?)?;
    expect_eq("generate_request.json", &body_for(GENERATE_PATH)?)?;
    expect_eq("embed_request.json", &body_for(EMBED_PATH)?)?;
    let health_call = log.iter().find(|c| c.path == HEALTH_PATH).ok_or("no health call")?;
    if health_call.method != "GET" || !health_call.body.is_empty() {
        return Err(format!("health call was {} with body {:?}", health_call.method, health_call.body));
    }

    for (path, request, response) in [
        (TRANSLATE_PATH, "translate_request.json", "translate_response.json"),
        (GENERATE_PATH, "generate_request.json", "generate_response.json"),
        (EMBED_PATH, "embed_request.json", "embed_response.json"),
    ] {
        let (status, body) = raw_post(&base, path, &golden(request)?)?;
        if status != 200 {
            return Err(format!("{path} answered {status}"));
        }
        expect_eq(response, &body)?;
    }
    let (status, body) = raw_get(&base, HEALTH_PATH)?;
    if status != 200 {
        return Err(format!("health answered {status}"));
    }
    expect_eq("health_response.json", &body)?;

    let fixed = MockBehavior {
        generator: GeneratorBehavior::Fixed(Default::default()),
        ..MockBehavior::default()
    };
    let strict = serve_mock(fixed, 0).map_err(|e| e.to_string())?;
    let (status, body) = raw_post(&strict.base_url(), GENERATE_PATH, &golden("generate_request.json")?)?;
    if status != 404 {
        return Err(format!("fixed generator miss answered {status}"));
    }
    expect_eq("generate_error_response.json", &body)
}
