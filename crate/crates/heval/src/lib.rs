//! Project store, provider gateway, reports, CLI and triage service for
//! heuristic evaluations run by language models.

pub mod cli;
pub mod config;
pub mod error;
pub mod gateway;
pub mod import;
pub mod pipeline;
pub mod reliability;
pub mod report;
pub mod server;
pub mod store;
pub mod transcript;

pub use error::{HevalError, Result};
pub use heval_core;
