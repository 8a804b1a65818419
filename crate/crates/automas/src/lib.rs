//! Host-side tooling around `automas-core`.
//!
//! - [`config`]: the JSON experiment configuration
//! - [`harness`]: experiment runner, result files and the walkthrough
//! - [`llm`]: chat-completion reasoning engine with transcript replay
//! - [`trace`]: JSON-lines trace export

pub mod config;
pub mod harness;
pub mod llm;
pub mod trace;
