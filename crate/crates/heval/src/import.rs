//! Human evaluator runs from a structured JSON file.
//!
//! ```json
//! {
//!   "evaluator": "expert-1",
//!   "timestamp": "2024-03-20T10:00:00Z",
//!   "issues": [
//!     {"heuristic": 1, "description": "No progress indicator during upload",
//!      "rationale": "...", "severity": 3, "task": 1, "screens": [2, 3]},
//!     {"heuristic": "Error prevention", "description": "...", "task": 2}
//!   ]
//! }
//! ```
//!
//! `heuristic` is a catalog number or name. `screens` defaults to every
//! screen of the task.

use std::path::Path;

use chrono::{DateTime, Utc};
use heval_core::model::{
    Evaluator, EvaluatorKind, EvaluationRun, IssueId, IssueSource, RunSettings, RunStatus,
    UsabilityIssue,
};
use heval_core::parse::normalize_heuristic_name;
use heval_core::{HeuristicId, Severity};
use serde::Deserialize;

use crate::error::{io_at, json_at, HevalError, Result};
use crate::store::Store;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum HeuristicRef {
    Number(i64),
    Name(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportIssue {
    pub heuristic: Option<HeuristicRef>,
    pub description: String,
    #[serde(default)]
    pub rationale: String,
    pub severity: Option<i64>,
    pub severity_rationale: Option<String>,
    pub task: u32,
    #[serde(default)]
    pub screens: Vec<u32>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportFile {
    pub evaluator: String,
    pub timestamp: Option<DateTime<Utc>>,
    pub issues: Vec<ImportIssue>,
}

fn resolve(h: &HeuristicRef) -> Result<HeuristicId> {
    match h {
        HeuristicRef::Number(n) => Ok(HeuristicId::new(*n)?),
        HeuristicRef::Name(name) => normalize_heuristic_name(name)
            .ok_or_else(|| HevalError::Invalid(format!("unknown heuristic {name:?}"))),
    }
}

/// Builds the run for an import file; ids are allocated in `store`.
pub fn build_human_run(store: &mut Store, file: &ImportFile) -> Result<EvaluationRun> {
    if file.evaluator.trim().is_empty() {
        return Err(HevalError::Invalid("import file names no evaluator".into()));
    }
    let run_id = store.allocate_run_id(&file.evaluator)?;
    let state = store.state();
    let mut issues = Vec::with_capacity(file.issues.len());
    for (n, raw) in file.issues.iter().enumerate() {
        let at = |e: HevalError| HevalError::Invalid(format!("issue {}: {e}", n + 1));
        let task = state
            .task(raw.task)
            .ok_or_else(|| at(HevalError::Invalid(format!("no task {}", raw.task))))?;
        let screens = if raw.screens.is_empty() {
            (1..=task.screen_count()).collect()
        } else {
            raw.screens.clone()
        };
        issues.push(UsabilityIssue {
            issue_id: IssueId::new(format!("{run_id}-{:03}", n + 1)),
            heuristic_id: raw.heuristic.as_ref().map(resolve).transpose().map_err(at)?,
            description: raw.description.trim().to_string(),
            rationale: raw.rationale.trim().to_string(),
            reported_severity: raw
                .severity
                .map(Severity::new)
                .transpose()
                .map_err(|e| at(e.into()))?,
            severity_rationale: raw.severity_rationale.clone(),
            screen_refs: screens,
            task_index: raw.task,
            source: IssueSource {
                evaluator: file.evaluator.clone(),
                run_id: run_id.clone(),
            },
            duplicate_of: None,
        });
    }
    Ok(EvaluationRun {
        run_id,
        evaluator: Evaluator {
            kind: EvaluatorKind::Human,
            label: file.evaluator.clone(),
            account_label: None,
        },
        timestamp: file.timestamp.unwrap_or_else(Utc::now),
        app_id: state.app_id.clone(),
        status: RunStatus::Complete,
        settings: RunSettings::default(),
        transcripts: Vec::new(),
        issues,
    })
}

/// Reads an import file and records it as a human run.
pub fn import_human(store: &mut Store, path: &Path) -> Result<EvaluationRun> {
    let text = std::fs::read_to_string(path).map_err(io_at(path))?;
    let file: ImportFile = serde_json::from_str(&text).map_err(json_at(path))?;
    let run = build_human_run(store, &file)?;
    store.add_run(run.clone(), &[])?;
    Ok(run)
}
