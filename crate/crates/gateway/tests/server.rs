mod common;

use std::sync::Arc;
use std::time::Duration;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use serde_json::{json, Value};
use xrouter_core::catalog::{Catalog, ProviderKind};
use xrouter_core::episode::{
    run_episode, EpisodeConfig, EpisodeResult, EpisodeStatus, Observation,
};
use xrouter_core::policies::{answer_message, call_model_message, Policy, SingleModel};
use xrouter_core::providers::{LiveEndpoint, ProviderPool};

use common::*;

/// Session handle, latest observation, driving policy and final result.
type Session = (String, Observation, Box<dyn Policy>, Option<EpisodeResult>);

const IDLE: Duration = Duration::from_secs(600);

fn reset(base: &str, body: Value) -> (String, Observation) {
    let (status, v) = post(&format!("{base}/env/reset"), &body);
    assert_eq!(status, 200, "{v}");
    (
        v["episode_id"].as_str().unwrap().to_string(),
        serde_json::from_value(v["observation"].clone()).unwrap(),
    )
}

fn step(base: &str, id: &str, action: Value) -> (u16, Value) {
    post(
        &format!("{base}/env/step"),
        &json!({"episode_id": id, "action": action}),
    )
}

/// Drives `policy` through reset/step and returns the terminal result.
fn drive(base: &str, reset_body: Value, policy: &mut dyn Policy) -> EpisodeResult {
    let (id, mut obs) = reset(base, reset_body);
    loop {
        let action = policy.decide(&obs).unwrap();
        let (status, v) = step(base, &id, action);
        assert_eq!(status, 200, "{v}");
        if v["done"] == json!(true) {
            return serde_json::from_value(v["info"]["result"].clone()).unwrap();
        }
        obs = serde_json::from_value(v["observation"].clone()).unwrap();
    }
}

#[test]
fn health_reports_version() {
    let server = start(engine(1), tasks(3), IDLE);
    let (status, v) = get(&format!("{}/healthz", server.url()));
    assert_eq!(status, 200);
    assert_eq!(v["status"], "ok");
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn malformed_bodies_get_typed_400() {
    let server = start(engine(1), tasks(3), IDLE);
    for route in [
        "/env/reset",
        "/env/step",
        "/v1/chat/completions",
        "/policy/decide",
    ] {
        let (status, body) = post_raw(&format!("{}{route}", server.url()), b"{not json", &[]);
        let v: Value = serde_json::from_slice(&body).unwrap();
        assert_eq!(
            (status, error_code(&v)),
            (400, "invalid_request"),
            "{route}"
        );
    }
    let (status, v) = post(
        &format!("{}/env/reset", server.url()),
        &json!({"task_id": "task-000", "task": {}}),
    );
    assert_eq!((status, error_code(&v)), (400, "invalid_request"));
}

#[test]
fn reset_gives_fresh_sessions_with_identical_observations() {
    let server = start(engine(1), tasks(3), IDLE);
    let body = json!({"task": {"id": "inline", "prompt": "Name a prime.", "reference_answer": "7"}, "seed": 5});
    let (a, obs_a) = reset(&server.url(), body.clone());
    let (b, obs_b) = reset(&server.url(), body);
    assert_ne!(a, b);
    assert_eq!(obs_a, obs_b);
    assert_eq!(obs_a.remaining_turns, 3);
    assert_eq!(obs_a.prompt, "Name a prime.");
    assert!(obs_a.catalog.contains("small") && obs_a.catalog.contains("large"));

    let (status, v) = post(
        &format!("{}/env/reset", server.url()),
        &json!({"task_id": "nope"}),
    );
    assert_eq!((status, error_code(&v)), (404, "unknown_task"));
}

#[test]
fn direct_answer_then_step_after_done() {
    let server = start(engine(1), tasks(3), IDLE);
    let (id, _) = reset(&server.url(), json!({"task_id": "task-002"}));
    let (status, v) = step(&server.url(), &id, answer_message("4"));
    assert_eq!(status, 200);
    assert_eq!(
        (v["done"].clone(), v["reward"].as_f64()),
        (json!(true), Some(1.0))
    );
    assert_eq!(v["final"]["status"], "done_direct");
    assert_eq!(v["info"]["cost_nano"], 0);

    let (status, v) = step(&server.url(), &id, answer_message("4"));
    assert_eq!((status, error_code(&v)), (409, "episode_finished"));
    let (status, v) = step(&server.url(), "sess-nope", answer_message("4"));
    assert_eq!((status, error_code(&v)), (404, "unknown_episode"));
}

#[test]
fn wrong_direct_answer_earns_nothing() {
    let server = start(engine(1), tasks(3), IDLE);
    let (id, _) = reset(&server.url(), json!({"task_id": "task-002"}));
    let (_, v) = step(&server.url(), &id, answer_message("5"));
    assert_eq!(
        (v["done"].clone(), v["reward"].as_f64()),
        (json!(true), Some(0.0))
    );
}

#[test]
fn call_model_continues_and_exposes_tool_result() {
    let server = start(engine(1), tasks(3), IDLE);
    let (id, obs) = reset(&server.url(), json!({"task_id": "task-001"}));
    let (status, v) = step(&server.url(), &id, call_model_message("small", &obs.prompt));
    assert_eq!(status, 200);
    assert_eq!(
        (v["done"].clone(), v["reward"].as_f64()),
        (json!(false), Some(0.0))
    );
    let next: Observation = serde_json::from_value(v["observation"].clone()).unwrap();
    assert_eq!(next.transcript.len(), obs.transcript.len() + 2);
    assert_eq!(next.transcript.last().unwrap()["role"], "tool");
    assert_eq!(v["tool_results"].as_array().unwrap().len(), 1);
    assert!(v["info"]["cost_nano"].as_u64().unwrap() > 0);
}

#[test]
fn protocol_invalid_action_ends_the_episode() {
    let server = start(engine(1), tasks(3), IDLE);
    let (id, _) = reset(&server.url(), json!({"task_id": "task-001"}));
    let bad = json!({"role": "assistant", "tool_calls": [{"function": {"name": "summon", "arguments": "{}"}}]});
    let (status, v) = step(&server.url(), &id, bad);
    assert_eq!(status, 200);
    assert_eq!(
        (v["done"].clone(), v["reward"].as_f64()),
        (json!(true), Some(0.0))
    );
    assert_eq!(v["final"]["status"], "failed");
}

#[test]
fn reset_overrides_apply() {
    let server = start(engine(1), tasks(3), IDLE);
    let (_, obs) = reset(
        &server.url(),
        json!({"task_id": "task-001", "overrides": {"max_turns": 5}}),
    );
    assert_eq!(obs.remaining_turns, 5);
    let (status, v) = post(
        &format!("{}/env/reset", server.url()),
        &json!({"task_id": "task-001", "overrides": {"lambda": -1.0}}),
    );
    assert_eq!((status, error_code(&v)), (400, "invalid_request"));
}

#[test]
fn idle_sessions_expire() {
    let server = start(engine(1), tasks(3), Duration::from_millis(50));
    let (id, _) = reset(&server.url(), json!({"task_id": "task-001"}));
    std::thread::sleep(Duration::from_millis(200));
    let (status, v) = step(&server.url(), &id, answer_message("1"));
    assert_eq!((status, error_code(&v)), (410, "session_expired"));
    let (_, m) = get(&format!("{}/metrics", server.url()));
    assert_eq!(m["sessions_expired"], 1);
}

/// Engine whose only model is served by a slow upstream.
fn slow_engine(delay_ms: u64, connections: usize) -> Arc<EpisodeConfig> {
    let url = slow_upstream("42", delay_ms, connections);
    std::env::set_var("XROUTER_API_KEY_SLOW_TEST", "sk-test");
    let mut model = sim_model(
        "slow",
        1.0,
        xrouter_core::catalog::PriceSchedule::new(10, 10, 0),
    );
    model.provider_kind = ProviderKind::Live;
    let mut cfg = EpisodeConfig::new(Catalog::new(vec![model], 0).unwrap(), 1);
    cfg.provider = Arc::new(ProviderPool::new().with_endpoints(vec![LiveEndpoint {
        name: "slow".into(),
        base_url: url,
        api_key_env: Some("XROUTER_API_KEY_SLOW_TEST".into()),
        models: vec![],
    }]));
    Arc::new(cfg)
}

#[test]
fn concurrent_step_on_one_session_is_busy() {
    let server = start(slow_engine(600, 1), tasks(3), IDLE);
    let base = server.url();
    let (id, obs) = reset(&base, json!({"task_id": "task-001"}));
    let first = {
        let (base, id, prompt) = (base.clone(), id.clone(), obs.prompt.clone());
        std::thread::spawn(move || step(&base, &id, call_model_message("slow", &prompt)))
    };
    std::thread::sleep(Duration::from_millis(200));
    let (status, v) = step(&base, &id, answer_message("1"));
    assert_eq!((status, error_code(&v)), (409, "session_busy"));
    let (status, v) = first.join().unwrap();
    assert_eq!(status, 200, "{v}");
    assert_eq!(v["done"], false);
}

#[test]
fn shutdown_drains_in_flight_step() {
    let server = start(slow_engine(500, 1), tasks(3), IDLE);
    let base = server.url();
    let (id, obs) = reset(&base, json!({"task_id": "task-001"}));
    let in_flight =
        std::thread::spawn(move || step(&base, &id, call_model_message("slow", &obs.prompt)));
    std::thread::sleep(Duration::from_millis(150));
    server.stop().unwrap();
    let (status, v) = in_flight.join().unwrap();
    assert_eq!(status, 200, "{v}");
    assert_eq!(v["tool_results"][0]["content"], "42");
}

#[test]
fn env_protocol_matches_local_episode() {
    let work = tasks(12);
    let server = start(engine(9), work.clone(), IDLE);
    let cfg = engine(9);
    for t in &work {
        let local = run_episode(t, &mut SingleModel::new("large"), &cfg);
        let remote = drive(
            &server.url(),
            json!({"task_id": t.id}),
            &mut SingleModel::new("large"),
        );
        assert_eq!(remote, local);
    }
}

#[test]
fn concurrent_sessions_are_isolated() {
    let work = tasks(6);
    let cfg = engine(3);
    let expected: Vec<EpisodeResult> = work
        .iter()
        .map(|t| {
            run_episode(
                t,
                &mut SingleModel::new(if t.id.ends_with('1') {
                    "small"
                } else {
                    "large"
                }),
                &cfg,
            )
        })
        .collect();
    let server = start(engine(3), work.clone(), IDLE);
    let base = server.url();

    // Each schedule is a sequence of session indices; sessions advance one
    // step at a time in that interleaving.
    let schedule = proptest::collection::vec(0usize..6, 0..40);
    let mut runner = TestRunner::new(Config::with_cases(24));
    runner
        .run(&schedule, |order| {
            let mut sessions: Vec<Session> = work
                .iter()
                .map(|t| {
                    let (id, obs) = reset(&base, json!({"task_id": t.id}));
                    let model = if t.id.ends_with('1') {
                        "small"
                    } else {
                        "large"
                    };
                    (
                        id,
                        obs,
                        Box::new(SingleModel::new(model)) as Box<dyn Policy>,
                        None,
                    )
                })
                .collect();
            let all: Vec<usize> = order
                .into_iter()
                .chain((0..6).cycle().take(6 * 3))
                .collect();
            for i in all {
                let (id, obs, policy, done) = &mut sessions[i];
                if done.is_some() {
                    continue;
                }
                let (status, v) = step(&base, id, policy.decide(obs).unwrap());
                prop_assert_eq!(status, 200);
                if v["done"] == json!(true) {
                    *done = Some(serde_json::from_value(v["info"]["result"].clone()).unwrap());
                } else {
                    *obs = serde_json::from_value(v["observation"].clone()).unwrap();
                }
            }
            for (k, (_, _, _, done)) in sessions.into_iter().enumerate() {
                prop_assert_eq!(done.as_ref(), Some(&expected[k]));
            }
            Ok(())
        })
        .unwrap();
}

fn chat(base: &str, body: &Value, seed: Option<&str>) -> (u16, Vec<u8>) {
    let headers: Vec<(&str, &str)> = seed
        .map(|s| vec![("x-xrouter-seed", s)])
        .unwrap_or_default();
    post_raw(
        &format!("{base}/v1/chat/completions"),
        &serde_json::to_vec(body).unwrap(),
        &headers,
    )
}

#[test]
fn chat_completions_runs_one_episode() {
    let server = start(engine(1), tasks(3), IDLE);
    let base = server.url();
    let body =
        json!({"model": "direct", "messages": [{"role": "user", "content": "Tell me a fact."}]});
    let (status, bytes) = chat(&base, &body, None);
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(status, 200, "{v}");
    assert_eq!(v["object"], "chat.completion");
    assert_eq!(v["choices"][0]["finish_reason"], "stop");
    assert!(v["choices"][0]["message"]["content"]
        .as_str()
        .is_some_and(|s| !s.is_empty()));
    assert_eq!(v["xrouter"]["strategy"], "done_direct");

    // A prompt matching a configured task is answered by the oracle.
    let known =
        json!({"model": "oracle", "messages": [{"role": "user", "content": "What is 2 squared?"}]});
    let v: Value = serde_json::from_slice(&chat(&base, &known, None).1).unwrap();
    assert_eq!(v["choices"][0]["message"]["content"], "4");

    let routed = json!({"model": "single:large", "messages": [
        {"role": "system", "content": "Be terse."},
        {"role": "user", "content": "What is 1 squared?"}
    ]});
    let v: Value = serde_json::from_slice(&chat(&base, &routed, Some("4")).1).unwrap();
    let usage = &v["usage"];
    assert!(usage["prompt_tokens"].as_u64().unwrap() > 0);
    assert_eq!(
        usage["total_tokens"].as_u64().unwrap(),
        usage["prompt_tokens"].as_u64().unwrap() + usage["completion_tokens"].as_u64().unwrap()
    );
    assert_eq!(v["xrouter"]["offload"]["large"], 1);
    assert!(v["xrouter"]["cost_nano"].as_u64().unwrap() > 0);
}

#[test]
fn chat_is_byte_deterministic_under_a_seed_header() {
    let server = start(engine(1), tasks(3), IDLE);
    let body = json!({"model": "cascade:small,large", "messages": [{"role": "user", "content": "What is 2 squared?"}]});
    let a = chat(&server.url(), &body, Some("77"));
    let b = chat(&server.url(), &body, Some("77"));
    assert_eq!(a.0, 200);
    assert_eq!(a, b);
    let (status, bytes) = chat(&server.url(), &body, Some("seventy"));
    assert_eq!(status, 400, "{}", String::from_utf8_lossy(&bytes));
}

#[test]
fn chat_rejects_unknown_policies_and_empty_requests() {
    let server = start(engine(1), tasks(3), IDLE);
    let (status, bytes) = chat(
        &server.url(),
        &json!({"model": "nonexistent", "messages": [{"role": "user", "content": "hi"}]}),
        None,
    );
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!((status, error_code(&v)), (404, "unknown_policy"));
    let (status, _) = chat(
        &server.url(),
        &json!({"model": "direct", "messages": []}),
        None,
    );
    assert_eq!(status, 400);
}

#[test]
fn chat_maps_failed_episodes_to_502() {
    let server = start(engine(1), tasks(3), IDLE);
    let (status, bytes) = chat(
        &server.url(),
        &json!({"model": "single:absent", "messages": [{"role": "user", "content": "hi"}]}),
        None,
    );
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!((status, error_code(&v)), (502, "episode_failed"), "{v}");
}

#[test]
fn decide_endpoint_serves_local_policies() {
    let server = start(engine(1), tasks(3), IDLE);
    let cfg = engine(1);
    let episode = xrouter_core::episode::Episode::new(tasks(3)[1].clone(), cfg);
    let obs = episode.observation();
    let (status, v) = post(
        &format!("{}/policy/decide", server.url()),
        &json!({"policy": "single:small", "observation": obs}),
    );
    assert_eq!(status, 200);
    assert_eq!(
        v["message"],
        SingleModel::new("small").decide(&obs).unwrap()
    );
    let (status, v) = post(
        &format!("{}/policy/decide", server.url()),
        &json!({"policy": "bogus", "observation": obs}),
    );
    assert_eq!((status, error_code(&v)), (404, "unknown_policy"));
}

#[test]
fn metrics_count_requests_and_episodes() {
    let server = start(engine(1), tasks(3), IDLE);
    let base = server.url();
    let (id, _) = reset(&base, json!({"task_id": "task-001"}));
    step(&base, &id, answer_message("1"));
    chat(
        &base,
        &json!({"model": "single:small", "messages": [{"role": "user", "content": "x"}]}),
        None,
    );
    let (status, m) = get(&format!("{base}/metrics"));
    assert_eq!(status, 200);
    assert_eq!(m["requests"]["env_reset"], 1);
    assert_eq!(m["requests"]["env_step"], 1);
    assert_eq!(m["requests"]["chat_completions"], 1);
    assert_eq!(m["episodes_completed"], 2);
    assert_eq!(m["sessions_active"], 1);
    assert_eq!(m["provider_invocations"], 1);
    assert!(m["cost_nano"].as_u64().unwrap() > 0);
}

#[test]
fn failed_status_is_reported_in_result() {
    let server = start(engine(1), tasks(3), IDLE);
    let (id, _) = reset(
        &server.url(),
        json!({"task_id": "task-001", "overrides": {"max_turns": 1}}),
    );
    let (_, v) = step(&server.url(), &id, call_model_message("small", "q"));
    let result: EpisodeResult = serde_json::from_value(v["info"]["result"].clone()).unwrap();
    assert_eq!(result.status, EpisodeStatus::Failed);
    assert_eq!(result.reward, 0.0);
    assert!(result.cost.nanos() > 0);
    assert_eq!(v["info"]["records"].as_array().unwrap().len(), 1);
}
