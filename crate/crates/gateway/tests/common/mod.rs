#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::Arc;
use std::time::Duration;

use serde_json::Value;
use xrouter_core::catalog::{
    CapabilityProfile, Catalog, DifficultyTier, ModelDescriptor, ModelTier, PriceSchedule,
    ProviderKind, TierAccuracy,
};
use xrouter_core::episode::{Difficulty, EpisodeConfig, Task, Verifier};
use xrouter_gateway::{AppState, BackgroundServer};

pub fn sim_model(name: &str, accuracy: f64, prices: PriceSchedule) -> ModelDescriptor {
    ModelDescriptor {
        name: name.into(),
        provider_kind: ProviderKind::Simulated,
        tier: ModelTier::Mid,
        description: format!("simulated {name}"),
        prices,
        max_context: 100_000,
        capability: Some(CapabilityProfile {
            accuracy_by_tier: TierAccuracy::uniform(accuracy),
            output_tokens_min: 20,
            output_tokens_max: 60,
            latency_ms_nominal: 100,
        }),
    }
}

/// Two simulated models: a cheap weak one and a pricey strong one.
pub fn catalog() -> Catalog {
    Catalog::new(
        vec![
            sim_model("small", 0.5, PriceSchedule::new(50, 200, 0)),
            sim_model("large", 0.9, PriceSchedule::new(1_250, 10_000, 0)),
        ],
        0,
    )
    .unwrap()
}

pub fn task(id: &str, prompt: &str, reference: &str) -> Task {
    Task {
        id: id.into(),
        prompt: prompt.into(),
        reference_answer: reference.into(),
        verifier: Verifier::ExactMatch,
        difficulty: Difficulty {
            pass_rate: 0.5,
            tier: Some(DifficultyTier::Medium),
        },
    }
}

pub fn tasks(n: usize) -> Vec<Task> {
    (0..n)
        .map(|i| {
            task(
                &format!("task-{i:03}"),
                &format!("What is {i} squared?"),
                &(i * i).to_string(),
            )
        })
        .collect()
}

pub fn engine(seed: u64) -> Arc<EpisodeConfig> {
    Arc::new(EpisodeConfig::new(catalog(), seed))
}

pub fn start(engine: Arc<EpisodeConfig>, tasks: Vec<Task>, idle: Duration) -> BackgroundServer {
    BackgroundServer::start(Arc::new(AppState::new(engine, tasks, idle)), "127.0.0.1:0").unwrap()
}

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into()
}

/// Status plus raw body bytes.
pub fn post_raw(url: &str, body: &[u8], headers: &[(&str, &str)]) -> (u16, Vec<u8>) {
    let mut req = agent().post(url).header("content-type", "application/json");
    for (k, v) in headers {
        req = req.header(*k, *v);
    }
    let mut resp = req.send(body).unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_to_vec().unwrap())
}

pub fn post(url: &str, body: &Value) -> (u16, Value) {
    let (status, bytes) = post_raw(url, &serde_json::to_vec(body).unwrap(), &[]);
    (status, serde_json::from_slice(&bytes).unwrap())
}

pub fn get(url: &str) -> (u16, Value) {
    let mut resp = agent().get(url).call().unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_json().unwrap())
}

pub fn error_code(body: &Value) -> &str {
    body["error"]["code"].as_str().unwrap_or("<none>")
}

/// Chat-completions upstream that answers every request with `answer`
/// after `delay_ms`, for as many connections as it is handed.
pub fn slow_upstream(answer: &str, delay_ms: u64, connections: usize) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let body = serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": answer}}],
        "usage": {"prompt_tokens": 10, "completion_tokens": 5}
    })
    .to_string();
    std::thread::spawn(move || {
        for _ in 0..connections {
            let Ok((mut stream, _)) = listener.accept() else {
                return;
            };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut content_length = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    content_length = v.trim().parse().unwrap();
                }
            }
            let mut payload = vec![0; content_length];
            let _ = reader.read_exact(&mut payload);
            std::thread::sleep(Duration::from_millis(delay_ms));
            let reply = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(reply.as_bytes());
        }
    });
    url
}
