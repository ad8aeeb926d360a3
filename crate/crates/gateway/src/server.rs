//! HTTP surface: health, metrics, a chat-completions facade over router
//! policies, the reset/step environment protocol and remote policy decisions.
//!
//! Every body is JSON. Errors use one shape,
//! `{"error": {"code": "...", "message": "..."}}`, with a stable `code`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::future::Future;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use xrouter_core::digest::content_digest;
use xrouter_core::episode::{
    run_episode, Difficulty, Episode, EpisodeConfig, EpisodeError, EpisodeResult, EpisodeStatus,
    Observation, Task, Verifier,
};
use xrouter_core::policies::{DecisionRequest, DecisionResponse, PolicySpec};
use xrouter_core::reward::RewardParams;

/// Header that pins the episode seed of a chat request.
pub const SEED_HEADER: &str = "x-xrouter-seed";

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        json_response(
            self.status,
            &json!({ "error": { "code": self.code, "message": self.message } }),
        )
    }
}

fn json_response<T: Serialize>(status: StatusCode, body: &T) -> Response {
    let bytes = serde_json::to_vec(body).expect("response serializes");
    (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::bad_request(format!("malformed request body: {e}")))
}

/// Aggregate counters exposed on `/metrics`.
#[derive(Debug, Default)]
pub struct Metrics {
    requests: Mutex<BTreeMap<&'static str, u64>>,
    episodes_completed: AtomicU64,
    episodes_failed: AtomicU64,
    sessions_created: AtomicU64,
    sessions_expired: AtomicU64,
    cost_nano: AtomicU64,
}

impl Metrics {
    fn hit(&self, route: &'static str) {
        *self
            .requests
            .lock()
            .expect("metrics lock")
            .entry(route)
            .or_insert(0) += 1;
    }

    fn finish(&self, r: &EpisodeResult) {
        if r.status == EpisodeStatus::Failed {
            self.episodes_failed.fetch_add(1, Ordering::Relaxed);
        } else {
            self.episodes_completed.fetch_add(1, Ordering::Relaxed);
        }
        self.cost_nano.fetch_add(r.cost.nanos(), Ordering::Relaxed);
    }
}

struct Session {
    episode: Arc<tokio::sync::Mutex<Episode>>,
    last_active: Mutex<Instant>,
}

/// Shared server state. Sessions live in a synchronized map; steps on one
/// session are serialized and a concurrent second step is refused.
pub struct AppState {
    base: Arc<EpisodeConfig>,
    tasks: Vec<Task>,
    by_id: HashMap<String, usize>,
    by_prompt: HashMap<String, usize>,
    sessions: Mutex<HashMap<String, Arc<Session>>>,
    expired: Mutex<HashSet<String>>,
    idle_timeout: Duration,
    next_session: AtomicU64,
    metrics: Metrics,
}

impl AppState {
    pub fn new(base: Arc<EpisodeConfig>, tasks: Vec<Task>, idle_timeout: Duration) -> Self {
        let by_id = tasks
            .iter()
            .enumerate()
            .map(|(i, t)| (t.id.clone(), i))
            .collect();
        let by_prompt = tasks
            .iter()
            .enumerate()
            .rev()
            .map(|(i, t)| (t.prompt.clone(), i))
            .collect();
        Self {
            base,
            tasks,
            by_id,
            by_prompt,
            sessions: Mutex::new(HashMap::new()),
            expired: Mutex::new(HashSet::new()),
            idle_timeout,
            next_session: AtomicU64::new(0),
            metrics: Metrics::default(),
        }
    }

    pub fn config(&self) -> &Arc<EpisodeConfig> {
        &self.base
    }

    fn session(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        let mut sessions = self.sessions.lock().expect("session table lock");
        let Some(session) = sessions.get(id).cloned() else {
            return Err(
                if self.expired.lock().expect("expired set lock").contains(id) {
                    expired_error(id)
                } else {
                    ApiError::new(
                        StatusCode::NOT_FOUND,
                        "unknown_episode",
                        format!("no session `{id}`"),
                    )
                },
            );
        };
        let mut last = session.last_active.lock().expect("session clock lock");
        if last.elapsed() > self.idle_timeout {
            drop(last);
            sessions.remove(id);
            self.expired
                .lock()
                .expect("expired set lock")
                .insert(id.to_string());
            self.metrics
                .sessions_expired
                .fetch_add(1, Ordering::Relaxed);
            return Err(expired_error(id));
        }
        *last = Instant::now();
        drop(last);
        Ok(session)
    }

    /// Drops sessions idle past the timeout; returns how many went.
    pub fn sweep(&self) -> usize {
        let mut sessions = self.sessions.lock().expect("session table lock");
        let stale: Vec<String> = sessions
            .iter()
            .filter(|(_, s)| {
                s.last_active.lock().expect("session clock lock").elapsed() > self.idle_timeout
            })
            .map(|(k, _)| k.clone())
            .collect();
        let mut expired = self.expired.lock().expect("expired set lock");
        for id in &stale {
            sessions.remove(id);
            expired.insert(id.clone());
        }
        self.metrics
            .sessions_expired
            .fetch_add(stale.len() as u64, Ordering::Relaxed);
        stale.len()
    }

    pub fn active_sessions(&self) -> usize {
        self.sessions.lock().expect("session table lock").len()
    }
}

fn expired_error(id: &str) -> ApiError {
    ApiError::new(
        StatusCode::GONE,
        "session_expired",
        format!("session `{id}` expired after inactivity"),
    )
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/metrics", get(metrics))
        .route("/v1/chat/completions", post(chat_completions))
        .route("/env/reset", post(env_reset))
        .route("/env/step", post(env_step))
        .route("/policy/decide", post(policy_decide))
        .with_state(state)
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve_on(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let sweeper = {
        let state = state.clone();
        let period =
            (state.idle_timeout / 2).clamp(Duration::from_millis(10), Duration::from_secs(60));
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(period);
            loop {
                tick.tick().await;
                state.sweep();
            }
        })
    };
    let result = axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await;
    sweeper.abort();
    result
}

/// A server on its own runtime thread, stopped on drop. Meant for tests and
/// embedding.
pub struct BackgroundServer {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl BackgroundServer {
    pub fn start(state: Arc<AppState>, bind: &str) -> std::io::Result<Self> {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let listener = runtime.block_on(tokio::net::TcpListener::bind(bind))?;
        let addr = listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            runtime.block_on(serve_on(listener, state, async {
                let _ = rx.await;
            }))
        });
        Ok(Self {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) -> std::io::Result<()> {
        self.halt()
    }

    fn halt(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t
                .join()
                .unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        let _ = self.halt();
    }
}

async fn healthz(State(state): State<Arc<AppState>>) -> Response {
    state.metrics.hit("healthz");
    json_response(
        StatusCode::OK,
        &json!({
            "status": "ok",
            "version": env!("CARGO_PKG_VERSION"),
            "catalog_version": state.base.catalog.version,
        }),
    )
}

async fn metrics(State(state): State<Arc<AppState>>) -> Response {
    state.metrics.hit("metrics");
    let m = &state.metrics;
    let requests = m.requests.lock().expect("metrics lock").clone();
    json_response(
        StatusCode::OK,
        &json!({
            "requests": requests,
            "episodes_completed": m.episodes_completed.load(Ordering::Relaxed),
            "episodes_failed": m.episodes_failed.load(Ordering::Relaxed),
            "sessions_created": m.sessions_created.load(Ordering::Relaxed),
            "sessions_active": state.active_sessions(),
            "sessions_expired": m.sessions_expired.load(Ordering::Relaxed),
            "cost_nano": m.cost_nano.load(Ordering::Relaxed),
            "provider_invocations": state.base.provider.inner_invocations(),
        }),
    )
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Overrides {
    max_turns: Option<u32>,
    fan_out_cap: Option<u32>,
    k: Option<f64>,
    lambda: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResetRequest {
    #[serde(default)]
    task: Option<Task>,
    #[serde(default)]
    task_id: Option<String>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    overrides: Overrides,
}

fn episode_config(
    base: &EpisodeConfig,
    seed: Option<u64>,
    o: &Overrides,
) -> Result<Arc<EpisodeConfig>, ApiError> {
    let mut cfg = base.clone();
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(v) = o.max_turns {
        cfg.limits.max_turns = v;
    }
    if let Some(v) = o.fan_out_cap {
        cfg.limits.fan_out_cap = v;
    }
    cfg.limits.check().map_err(ApiError::bad_request)?;
    if o.k.is_some() || o.lambda.is_some() {
        cfg.reward = RewardParams::new(
            o.k.unwrap_or(cfg.reward.success_bonus),
            o.lambda.unwrap_or(cfg.reward.cost_penalty),
        )
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    }
    Ok(Arc::new(cfg))
}

async fn env_reset(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    state.metrics.hit("env_reset");
    let req: ResetRequest = parse_body(&body)?;
    let task = match (req.task, req.task_id) {
        (Some(t), None) => t,
        (None, Some(id)) => state
            .by_id
            .get(&id)
            .map(|&i| state.tasks[i].clone())
            .ok_or_else(|| {
                ApiError::new(
                    StatusCode::NOT_FOUND,
                    "unknown_task",
                    format!("no task `{id}`"),
                )
            })?,
        _ => {
            return Err(ApiError::bad_request(
                "give exactly one of `task` and `task_id`",
            ))
        }
    };
    let cfg = episode_config(&state.base, req.seed, &req.overrides)?;
    let episode = Episode::new(task, cfg);
    let observation = episode.observation();
    let engine_id = episode.state().episode_id.clone();
    let n = state.next_session.fetch_add(1, Ordering::SeqCst);
    let session_id = format!("sess-{n:06}-{}", engine_id.trim_start_matches("ep-"));
    state.sessions.lock().expect("session table lock").insert(
        session_id.clone(),
        Arc::new(Session {
            episode: Arc::new(tokio::sync::Mutex::new(episode)),
            last_active: Mutex::new(Instant::now()),
        }),
    );
    state
        .metrics
        .sessions_created
        .fetch_add(1, Ordering::Relaxed);
    Ok(json_response(
        StatusCode::OK,
        &json!({
            "episode_id": session_id,
            "engine_episode_id": engine_id,
            "observation": observation,
        }),
    ))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepRequest {
    episode_id: String,
    action: Value,
}

async fn env_step(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    state.metrics.hit("env_step");
    let req: StepRequest = parse_body(&body)?;
    let session = state.session(&req.episode_id)?;
    let mut guard = session.episode.clone().try_lock_owned().map_err(|_| {
        ApiError::new(
            StatusCode::CONFLICT,
            "session_busy",
            format!("session `{}` is already processing a step", req.episode_id),
        )
    })?;
    let action = req.action;
    let (outcome, guard) = tokio::task::spawn_blocking(move || {
        let out = guard.step(&action);
        (out, guard)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    let outcome = outcome.map_err(|e| match e {
        EpisodeError::Finished(status) => ApiError::new(
            StatusCode::CONFLICT,
            "episode_finished",
            format!("episode already finished with status {}", status.as_str()),
        ),
    })?;
    *session.last_active.lock().expect("session clock lock") = Instant::now();
    let st = guard.state();
    if !outcome.done {
        return Ok(json_response(
            StatusCode::OK,
            &json!({
                "episode_id": req.episode_id,
                "observation": guard.observation(),
                "tool_results": outcome.tool_results,
                "reward": 0.0,
                "done": false,
                "info": {
                    "cost_nano": st.accumulated_cost.nanos(),
                    "cost_usd": st.accumulated_cost.usd_string(),
                    "turn_index": st.turn_index,
                    "records": st.ledger.len(),
                },
            }),
        ));
    }
    let result = guard.result().expect("finished episodes have a result");
    state.metrics.finish(&result);
    Ok(json_response(
        StatusCode::OK,
        &json!({
            "episode_id": req.episode_id,
            "final": {
                "status": result.status,
                "answer": result.final_answer,
                "success": result.success,
            },
            "tool_results": outcome.tool_results,
            "reward": result.reward,
            "done": true,
            "info": {
                "cost_nano": result.cost.nanos(),
                "cost_usd": result.cost.usd_string(),
                "failure": result.failure,
                "records": result.records,
                "result": result,
            },
        }),
    ))
}

#[derive(Debug, Deserialize)]
struct ChatMessageIn {
    role: String,
    #[serde(default)]
    content: Option<Value>,
}

#[derive(Debug, Deserialize)]
struct ChatRequest {
    model: String,
    messages: Vec<ChatMessageIn>,
    #[serde(default)]
    seed: Option<u64>,
}

fn message_text(content: &Value) -> Option<String> {
    match content {
        Value::String(s) => Some(s.clone()),
        // Content parts: concatenate the text parts.
        Value::Array(parts) => Some(
            parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect::<Vec<_>>()
                .join("\n"),
        ),
        _ => None,
    }
}

fn unknown_policy(name: &str, detail: impl std::fmt::Display) -> ApiError {
    ApiError::new(
        StatusCode::NOT_FOUND,
        "unknown_policy",
        format!("`{name}`: {detail}"),
    )
}

async fn chat_completions(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    state.metrics.hit("chat_completions");
    let req: ChatRequest = parse_body(&body)?;
    let header_seed = match headers.get(SEED_HEADER) {
        Some(v) => Some(
            v.to_str()
                .ok()
                .and_then(|s| s.trim().parse::<u64>().ok())
                .ok_or_else(|| {
                    ApiError::bad_request(format!("{SEED_HEADER} must be an unsigned integer"))
                })?,
        ),
        None => None,
    };
    let prompt = req
        .messages
        .iter()
        .rev()
        .find(|m| m.role == "user")
        .and_then(|m| m.content.as_ref().and_then(message_text))
        .ok_or_else(|| ApiError::bad_request("request has no user message with text content"))?;
    let spec = PolicySpec::parse_name(&req.model).map_err(|e| unknown_policy(&req.model, e))?;
    // A prompt that matches a configured task is scored against it.
    let task = match state.by_prompt.get(&prompt) {
        Some(&i) => state.tasks[i].clone(),
        None => Task {
            id: format!("chat-{}", &content_digest(prompt.as_bytes())[..16]),
            prompt: prompt.clone(),
            reference_answer: String::new(),
            verifier: Verifier::ExactMatch,
            difficulty: Difficulty::default(),
        },
    };
    let cfg = episode_config(&state.base, header_seed.or(req.seed), &Overrides::default())?;
    let mut policy = spec
        .build(&state.tasks, cfg.seed, &cfg.limits)
        .map_err(|e| unknown_policy(&req.model, e))?;
    let policy_name = spec.name();
    let result = tokio::task::spawn_blocking(move || run_episode(&task, policy.as_mut(), &cfg))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    state.metrics.finish(&result);
    if result.status == EpisodeStatus::Failed {
        let detail = serde_json::to_string(&result.failure).unwrap_or_default();
        return Err(ApiError::new(
            StatusCode::BAD_GATEWAY,
            "episode_failed",
            detail,
        ));
    }
    let (prompt_tokens, completion_tokens) =
        result.records.iter().fold((0u64, 0u64), |(p, c), r| {
            (p + r.usage.prompt_tokens, c + r.usage.completion_tokens)
        });
    let mut offload: BTreeMap<&str, u64> = BTreeMap::new();
    for r in &result.records {
        *offload.entry(r.model_name.as_str()).or_insert(0) += 1;
    }
    let body = json!({
        "id": format!("chatcmpl-{}", result.episode_id.trim_start_matches("ep-")),
        "object": "chat.completion",
        "created": 0,
        "model": req.model,
        "choices": [{
            "index": 0,
            "message": { "role": "assistant", "content": result.final_answer.clone().unwrap_or_default() },
            "finish_reason": "stop",
        }],
        "usage": {
            "prompt_tokens": prompt_tokens,
            "completion_tokens": completion_tokens,
            "total_tokens": prompt_tokens + completion_tokens,
        },
        "xrouter": {
            "policy": policy_name,
            "episode_id": result.episode_id,
            "strategy": result.status,
            "turns": result.turns,
            "cost_nano": result.cost.nanos(),
            "cost_usd": result.cost.usd_string(),
            "router_cost_nano": result.router_cost.nanos(),
            "offload": offload,
        },
    });
    Ok(json_response(StatusCode::OK, &body))
}

async fn policy_decide(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> Result<Response, ApiError> {
    state.metrics.hit("policy_decide");
    let req: DecisionRequest = parse_body(&body)?;
    let spec = PolicySpec::parse_name(&req.policy).map_err(|e| unknown_policy(&req.policy, e))?;
    if matches!(spec, PolicySpec::External { .. }) {
        return Err(ApiError::bad_request(
            "the remote side cannot itself be external",
        ));
    }
    let observation: Observation = req.observation;
    let base = state.base.clone();
    let tasks = state.tasks.clone();
    let message = tokio::task::spawn_blocking(move || {
        let mut policy = spec.build(&tasks, base.seed, &base.limits)?;
        policy.decide(&observation)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
    .map_err(|e| ApiError::new(StatusCode::BAD_GATEWAY, "policy_error", e.to_string()))?;
    Ok(json_response(StatusCode::OK, &DecisionResponse { message }))
}
