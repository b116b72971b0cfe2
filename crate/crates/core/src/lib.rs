//! Pure core of the heuristic-evaluation harness.
//!
//! Everything here is deterministic and free of IO so that it can be reused
//! from any host: the heuristic catalog, prompt construction, response
//! parsing, duplicate matching, coverage and reliability arithmetic, and the
//! triage state machine whose decisions are journaled by the store.
#![no_std]

extern crate alloc;

pub mod analysis;
pub mod coverage;
pub mod dedup;
pub mod error;
pub mod hash;
pub mod heuristic;
pub mod model;
pub mod parse;
pub mod prompt;
pub mod reliability;
pub mod text;
pub mod triage;

pub use error::{Error, Result};
pub use heuristic::{heuristic_catalog, severity_label, Batch, Heuristic, HeuristicId, Severity};
