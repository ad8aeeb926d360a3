//! HTTP gateway and command-line driver for the xrouter engine.
//!
//! The gateway exposes a chat-completions facade that runs one routing
//! episode per request, a reset/step environment protocol for external
//! trainers, and a decision endpoint that lets a remote engine borrow a
//! locally configured policy.

pub mod cli;
pub mod config;
pub mod server;

pub use config::{ConfigError, RunConfig, CONFIG_ENV};
pub use server::{router, serve_on, AppState, BackgroundServer, SEED_HEADER};
