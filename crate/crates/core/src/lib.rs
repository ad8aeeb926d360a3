//! Cost-aware LLM routing engine.
//!
//! A router policy sees a task and a priced model catalog, then answers
//! directly or calls models through the orchestration layer, which enforces
//! turn, fan-out and budget limits and records every invocation in an exact
//! integer cost ledger. Episodes are scored with a success-gated,
//! cost-penalized reward; the evaluation harness aggregates runs into
//! reports with accuracy, cost, cost utility and routing distributions.

pub mod catalog;
pub mod cost_ledger;
pub mod digest;
pub mod episode;
pub mod evalharness;
pub mod orchestrator;
pub mod policies;
pub mod providers;
pub mod reward;
pub mod tool_protocol;
