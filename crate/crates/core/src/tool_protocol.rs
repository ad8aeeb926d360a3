//! Router message protocol on the OpenAI chat-completions wire shape.
//!
//! The router speaks two functions, `call_model` and `select_response`.
//! A content-only assistant message is a direct answer before any tool call
//! in the episode and a synthesized answer after one.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::catalog::Catalog;
use crate::cost_ledger::{CallOutcome, CallRecord, TokenUsage};
use crate::episode::EpisodeState;
use crate::orchestrator::EpisodeLimits;
use crate::providers::count_tokens;

pub const CALL_MODEL: &str = "call_model";
pub const SELECT_RESPONSE: &str = "select_response";

/// Sampling defaults applied when the router omits them.
pub const DEFAULT_TEMPERATURE: f64 = 1.0;
pub const DEFAULT_TOP_P: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallModel {
    pub model_name: String,
    pub system_prompt_override: Option<String>,
    pub temperature: Option<f64>,
    pub top_p: Option<f64>,
    pub payload: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ToolCall {
    CallModel(CallModel),
    SelectResponse { source_call_id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RouterMessage {
    DirectAnswer(String),
    ToolCalls(Vec<ToolCall>),
    FinalSynthesis(String),
}

/// Whether a tool call has already happened in the episode; decides how a
/// content-only message is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    BeforeToolCalls,
    AfterToolCalls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolErrorCode {
    InvalidJson,
    NotAMessage,
    MissingContent,
    EmptyToolCalls,
    MalformedToolCall,
    UnknownFunction,
    MalformedArguments,
}

impl ProtocolErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolErrorCode::InvalidJson => "invalid_json",
            ProtocolErrorCode::NotAMessage => "not_a_message",
            ProtocolErrorCode::MissingContent => "missing_content",
            ProtocolErrorCode::EmptyToolCalls => "empty_tool_calls",
            ProtocolErrorCode::MalformedToolCall => "malformed_tool_call",
            ProtocolErrorCode::UnknownFunction => "unknown_function",
            ProtocolErrorCode::MalformedArguments => "malformed_arguments",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{}: {detail}", code.as_str())]
pub struct ProtocolError {
    pub code: ProtocolErrorCode,
    pub detail: String,
}

impl ProtocolError {
    fn new(code: ProtocolErrorCode, detail: impl Into<String>) -> Self {
        Self {
            code,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CallModelArgs {
    model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    system_prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    top_p: Option<f64>,
    payload: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectResponseArgs {
    call_id: String,
}

/// Parses raw bytes; never panics, any failure is a typed error.
pub fn parse_router_bytes(raw: &[u8], phase: Phase) -> Result<RouterMessage, ProtocolError> {
    let value: Value = serde_json::from_slice(raw)
        .map_err(|e| ProtocolError::new(ProtocolErrorCode::InvalidJson, e.to_string()))?;
    parse_router_message(&value, phase)
}

pub fn parse_router_message(raw: &Value, phase: Phase) -> Result<RouterMessage, ProtocolError> {
    let obj = raw.as_object().ok_or_else(|| {
        ProtocolError::new(
            ProtocolErrorCode::NotAMessage,
            "message must be a JSON object",
        )
    })?;
    if let Some(role) = obj.get("role") {
        if role.as_str() != Some("assistant") {
            return Err(ProtocolError::new(
                ProtocolErrorCode::NotAMessage,
                format!("router messages have role \"assistant\", got {role}"),
            ));
        }
    }
    match obj.get("tool_calls") {
        Some(Value::Array(items)) => {
            if items.is_empty() {
                return Err(ProtocolError::new(
                    ProtocolErrorCode::EmptyToolCalls,
                    "tool_calls is empty",
                ));
            }
            items
                .iter()
                .map(parse_tool_call)
                .collect::<Result<Vec<_>, _>>()
                .map(RouterMessage::ToolCalls)
        }
        Some(Value::Null) | None => match obj.get("content") {
            Some(Value::String(text)) => Ok(match phase {
                Phase::BeforeToolCalls => RouterMessage::DirectAnswer(text.clone()),
                Phase::AfterToolCalls => RouterMessage::FinalSynthesis(text.clone()),
            }),
            _ => Err(ProtocolError::new(
                ProtocolErrorCode::MissingContent,
                "message has neither tool_calls nor string content",
            )),
        },
        Some(_) => Err(ProtocolError::new(
            ProtocolErrorCode::MalformedToolCall,
            "tool_calls must be an array",
        )),
    }
}

fn parse_tool_call(item: &Value) -> Result<ToolCall, ProtocolError> {
    let malformed = |detail: &str| ProtocolError::new(ProtocolErrorCode::MalformedToolCall, detail);
    let function = item
        .get("function")
        .and_then(Value::as_object)
        .ok_or_else(|| malformed("tool call lacks a function object"))?;
    if let Some(kind) = item.get("type") {
        if kind.as_str() != Some("function") {
            return Err(malformed("tool call type must be \"function\""));
        }
    }
    let name = function
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed("function.name must be a string"))?;
    let arguments = match function.get("arguments") {
        Some(Value::String(s)) => serde_json::from_str::<Value>(s).map_err(|e| {
            ProtocolError::new(ProtocolErrorCode::MalformedArguments, e.to_string())
        })?,
        // Tolerate an already-decoded object.
        Some(v @ Value::Object(_)) => v.clone(),
        _ => {
            return Err(ProtocolError::new(
                ProtocolErrorCode::MalformedArguments,
                "function.arguments must be a JSON document string",
            ))
        }
    };
    let bad_args = |e: serde_json::Error| {
        ProtocolError::new(ProtocolErrorCode::MalformedArguments, e.to_string())
    };
    match name {
        CALL_MODEL => {
            let args: CallModelArgs = serde_json::from_value(arguments).map_err(bad_args)?;
            Ok(ToolCall::CallModel(CallModel {
                model_name: args.model,
                system_prompt_override: args.system_prompt,
                temperature: args.temperature,
                top_p: args.top_p,
                payload: args.payload,
            }))
        }
        SELECT_RESPONSE => {
            let args: SelectResponseArgs = serde_json::from_value(arguments).map_err(bad_args)?;
            Ok(ToolCall::SelectResponse {
                source_call_id: args.call_id,
            })
        }
        other => Err(ProtocolError::new(
            ProtocolErrorCode::UnknownFunction,
            format!("unknown function `{other}`"),
        )),
    }
}

fn tool_call_wire(index: usize, call: &ToolCall) -> Value {
    let (name, arguments) = match call {
        ToolCall::CallModel(c) => (
            CALL_MODEL,
            serde_json::to_string(&CallModelArgs {
                model: c.model_name.clone(),
                system_prompt: c.system_prompt_override.clone(),
                temperature: c.temperature,
                top_p: c.top_p,
                payload: c.payload.clone(),
            }),
        ),
        ToolCall::SelectResponse { source_call_id } => (
            SELECT_RESPONSE,
            serde_json::to_string(&SelectResponseArgs {
                call_id: source_call_id.clone(),
            }),
        ),
    };
    json!({
        "id": format!("call_{index}"),
        "type": "function",
        "function": {
            "name": name,
            "arguments": arguments.expect("arguments serialize"),
        }
    })
}

/// Wire form of a router message. Tool call ids are positional (`call_0`, ...).
pub fn serialize_router_message(message: &RouterMessage) -> Value {
    match message {
        RouterMessage::DirectAnswer(text) | RouterMessage::FinalSynthesis(text) => {
            json!({ "role": "assistant", "content": text })
        }
        RouterMessage::ToolCalls(calls) => json!({
            "role": "assistant",
            "content": null,
            "tool_calls": calls.iter().enumerate().map(|(i, c)| tool_call_wire(i, c)).collect::<Vec<_>>(),
        }),
    }
}

// ---- validation -----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum Violation {
    UnknownModel {
        model: String,
    },
    FanOutExceeded {
        count: usize,
        cap: u32,
    },
    UnknownCallId {
        call_id: String,
    },
    TemperatureOutOfRange {
        value: f64,
    },
    TopPOutOfRange {
        value: f64,
    },
    ContextExceeded {
        model: String,
        prompt_tokens: u64,
        max_context: u64,
    },
    /// A select combined with model calls, or more than one select.
    MixedTurn,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Verdict {
    pub violations: Vec<Violation>,
}

impl Verdict {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a call list against the catalog snapshot, the episode history and
/// the limits, collecting every violation.
pub fn validate(
    calls: &[ToolCall],
    catalog: &Catalog,
    episode: &EpisodeState,
    limits: &EpisodeLimits,
) -> Verdict {
    validate_against(calls, catalog, &episode.delivered_call_ids(), limits)
}

pub fn validate_against(
    calls: &[ToolCall],
    catalog: &Catalog,
    known_call_ids: &BTreeSet<String>,
    limits: &EpisodeLimits,
) -> Verdict {
    let mut violations = Vec::new();
    let model_calls = calls
        .iter()
        .filter(|c| matches!(c, ToolCall::CallModel(_)))
        .count();
    let selects = calls.len() - model_calls;
    if selects > 1 || (selects == 1 && model_calls > 0) {
        violations.push(Violation::MixedTurn);
    }
    if model_calls > limits.fan_out_cap as usize {
        violations.push(Violation::FanOutExceeded {
            count: model_calls,
            cap: limits.fan_out_cap,
        });
    }
    for call in calls {
        match call {
            ToolCall::CallModel(c) => {
                match catalog.get(&c.model_name) {
                    None => violations.push(Violation::UnknownModel {
                        model: c.model_name.clone(),
                    }),
                    Some(m) => {
                        let prompt_tokens = count_tokens(&c.payload)
                            + c.system_prompt_override
                                .as_deref()
                                .map(count_tokens)
                                .unwrap_or(0);
                        if prompt_tokens > m.max_context {
                            violations.push(Violation::ContextExceeded {
                                model: m.name.clone(),
                                prompt_tokens,
                                max_context: m.max_context,
                            });
                        }
                    }
                }
                if let Some(t) = c.temperature {
                    if !(0.0..=2.0).contains(&t) {
                        violations.push(Violation::TemperatureOutOfRange { value: t });
                    }
                }
                if let Some(p) = c.top_p {
                    if !(p > 0.0 && p <= 1.0) {
                        violations.push(Violation::TopPOutOfRange { value: p });
                    }
                }
            }
            ToolCall::SelectResponse { source_call_id } => {
                if !known_call_ids.contains(source_call_id) {
                    violations.push(Violation::UnknownCallId {
                        call_id: source_call_id.clone(),
                    });
                }
            }
        }
    }
    Verdict { violations }
}

// ---- tool results ---------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResultMetadata {
    pub usage: TokenUsage,
    pub cost_nano: u64,
    pub cost_usd: String,
    pub cached: bool,
    pub latency_ms: u64,
    pub retry_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correctness_hint: Option<bool>,
}

/// Tool-role message delivered back to the router for one model call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResultMessage {
    pub role: String,
    pub tool_call_id: String,
    pub name: String,
    pub content: String,
    pub error: Option<String>,
    pub metadata: ToolResultMetadata,
}

impl ToolResultMessage {
    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("tool result serializes")
    }

    pub fn from_value(value: &Value) -> Option<Self> {
        serde_json::from_value(value.clone()).ok()
    }
}

/// Builds the tool message for a record. Failed records carry their outcome
/// as the error marker and empty content.
pub fn serialize_tool_result(
    record: &CallRecord,
    response_text: &str,
    correctness_hint: Option<bool>,
) -> ToolResultMessage {
    let (content, error) = match record.outcome {
        CallOutcome::Ok => (response_text.to_string(), None),
        other => (String::new(), Some(other.as_str().to_string())),
    };
    ToolResultMessage {
        role: "tool".to_string(),
        tool_call_id: record.call_id.clone(),
        name: record.model_name.clone(),
        content,
        error,
        metadata: ToolResultMetadata {
            usage: record.usage,
            cost_nano: record.cost.nanos(),
            cost_usd: record.cost.usd_string(),
            cached: record.cached,
            latency_ms: record.latency_ms,
            retry_count: record.retry_count,
            correctness_hint,
        },
    }
}
