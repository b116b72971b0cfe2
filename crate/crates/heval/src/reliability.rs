//! Repeated synthetic runs from a plan file, and the consistency summary.
//!
//! ```toml
//! providers = ["gpt-4"]
//! accounts = ["work", "personal"]
//! repetitions = 1
//! schedule = ["2024-03-20T09:00:00Z", "2024-06-17T09:00:00Z"]   # or "immediate"
//! ```
//!
//! Each invocation runs the slots that are due and not yet executed, so a
//! plan spanning months is driven by calling `heval reliability run` from
//! an external scheduler. Executed slots are kept in
//! `reliability/executed.json`.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use heval_core::coverage::build_match_report;
use heval_core::dedup::TokenOverlap;
use heval_core::model::{EvaluationRun, EvaluatorKind, IssueId, RunId};
use heval_core::reliability::{coverage_consistency, performance_consistency, ConsistencySeries};
use heval_core::text::TermVector;
use heval_core::triage::ProjectState;
use serde::{Deserialize, Serialize};

use crate::error::{io_at, HevalError, Result};
use crate::gateway::Gateway;
use crate::pipeline::{execute_run, prepare_run, summarize, EvaluateOptions, RunSummary};
use crate::store::{write_atomic, Store};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Schedule {
    /// Only "immediate" is accepted.
    Keyword(String),
    Instants(Vec<DateTime<Utc>>),
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Keyword("immediate".into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReliabilityPlan {
    #[serde(default)]
    pub project_id: Option<String>,
    pub providers: Vec<String>,
    /// Account labels as named in the provider config; empty means the
    /// provider's default credential.
    #[serde(default)]
    pub accounts: Vec<String>,
    pub repetitions: u32,
    #[serde(default)]
    pub schedule: Schedule,
    /// Task indices; empty means all.
    #[serde(default)]
    pub tasks: Vec<u32>,
    #[serde(default = "default_floor")]
    pub at_least_two_floor: bool,
}

fn default_floor() -> bool {
    true
}

/// One planned run.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Slot {
    pub provider: String,
    pub account: Option<String>,
    pub at: Option<DateTime<Utc>>,
    pub repetition: u32,
}

impl Slot {
    pub fn key(&self) -> String {
        format!(
            "{}/{}/{}/{}",
            self.provider,
            self.account.as_deref().unwrap_or("-"),
            self.at.map(|t| t.to_rfc3339()).unwrap_or_else(|| "immediate".into()),
            self.repetition
        )
    }
}

impl ReliabilityPlan {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_at(path))?;
        let plan: ReliabilityPlan = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| HevalError::Config {
                path: path.to_path_buf(),
                line: e.line(),
                message: e.to_string(),
            })?
        } else {
            toml::from_str(&text).map_err(|e| HevalError::Config {
                path: path.to_path_buf(),
                line: e
                    .span()
                    .map(|s| text[..s.start].matches('\n').count() + 1)
                    .unwrap_or(0),
                message: e.message().to_string(),
            })?
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.providers.is_empty() {
            return Err(heval_core::Error::Parameter("plan names no providers".into()).into());
        }
        if self.repetitions < 1 {
            return Err(heval_core::Error::Parameter("repetitions must be at least 1".into()).into());
        }
        if let Schedule::Keyword(k) = &self.schedule {
            if k != "immediate" {
                return Err(heval_core::Error::Parameter(format!(
                    "schedule must be \"immediate\" or a list of instants, not {k:?}"
                ))
                .into());
            }
        }
        Ok(())
    }

    /// Every slot of the plan, grouped by provider-account pair in plan order.
    pub fn slots(&self) -> Vec<Vec<Slot>> {
        let accounts: Vec<Option<String>> = if self.accounts.is_empty() {
            vec![None]
        } else {
            self.accounts.iter().cloned().map(Some).collect()
        };
        let instants: Vec<Option<DateTime<Utc>>> = match &self.schedule {
            Schedule::Keyword(_) => vec![None],
            Schedule::Instants(list) => {
                let mut list = list.clone();
                list.sort();
                list.into_iter().map(Some).collect()
            }
        };
        let mut pairs = Vec::new();
        for provider in &self.providers {
            for account in &accounts {
                let mut slots = Vec::new();
                for at in &instants {
                    for repetition in 1..=self.repetitions {
                        slots.push(Slot {
                            provider: provider.clone(),
                            account: account.clone(),
                            at: *at,
                            repetition,
                        });
                    }
                }
                pairs.push(slots);
            }
        }
        pairs
    }
}

fn executed_path(root: &Path) -> std::path::PathBuf {
    root.join("reliability").join("executed.json")
}

/// Slot key to the run it produced.
pub fn executed_slots(root: &Path) -> Result<BTreeMap<String, RunId>> {
    let path = executed_path(root);
    match std::fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text).map_err(crate::error::json_at(&path)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(BTreeMap::new()),
        Err(e) => Err(io_at(&path)(e)),
    }
}

fn record_slot(root: &Path, slot: &Slot, run_id: &RunId) -> Result<()> {
    let mut done = executed_slots(root)?;
    done.insert(slot.key(), run_id.clone());
    let path = executed_path(root);
    let dir = path.parent().expect("has parent");
    std::fs::create_dir_all(dir).map_err(io_at(dir))?;
    let mut bytes = serde_json::to_vec_pretty(&done).expect("map serializes");
    bytes.push(b'\n');
    write_atomic(&path, &bytes)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PlanOutcome {
    pub runs: Vec<RunSummary>,
    /// Slots whose scheduled instant is still in the future.
    pub not_due: usize,
    pub already_done: usize,
    pub errors: Vec<String>,
}

/// Runs every due, unexecuted slot. Provider-account pairs run on their
/// own threads; the slots of one pair run in order, each recorded before
/// the next starts. Gateways are looked up by provider name.
pub fn execute_plan(
    store: &mut Store,
    plan: &ReliabilityPlan,
    gateways: &BTreeMap<String, Gateway>,
    now: DateTime<Utc>,
) -> Result<PlanOutcome> {
    plan.validate()?;
    for p in &plan.providers {
        if !gateways.contains_key(p) {
            return Err(crate::gateway::ProviderError::UnknownProvider(p.clone()).into());
        }
    }
    let root = store.root().to_path_buf();
    let done = executed_slots(&root)?;
    let mut outcome = PlanOutcome::default();
    let mut work = Vec::new();
    for pair in plan.slots() {
        let mut due = Vec::new();
        for slot in pair {
            if done.contains_key(&slot.key()) {
                outcome.already_done += 1;
            } else if slot.at.is_some_and(|t| t > now) {
                outcome.not_due += 1;
            } else {
                due.push(slot);
            }
        }
        if !due.is_empty() {
            work.push(due);
        }
    }

    let shared = Mutex::new(store);
    let results: Mutex<Vec<(Slot, std::result::Result<RunSummary, String>)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for pair in &work {
            let shared = &shared;
            let results = &results;
            let root = &root;
            scope.spawn(move || {
                for slot in pair {
                    let gateway = &gateways[&slot.provider];
                    let options = EvaluateOptions {
                        tasks: plan.tasks.clone(),
                        account: slot.account.clone(),
                        at_least_two_floor: plan.at_least_two_floor,
                        system_message: None,
                    };
                    let step = (|| -> Result<RunSummary> {
                        let job = prepare_run(&mut shared.lock().unwrap(), &slot.provider, &options)?;
                        let (run, warnings) = execute_run(&job, gateway)?;
                        let summary = summarize(&run, &warnings);
                        let mut store = shared.lock().unwrap();
                        store.add_run(run, &warnings)?;
                        record_slot(root, slot, &summary.run_id)?;
                        Ok(summary)
                    })();
                    let failed = step.is_err();
                    results
                        .lock()
                        .unwrap()
                        .push((slot.clone(), step.map_err(|e| e.to_string())));
                    if failed {
                        break;
                    }
                }
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by(|a, b| a.0.cmp(&b.0));
    for (slot, r) in results {
        match r {
            Ok(summary) => outcome.runs.push(summary),
            Err(e) => outcome.errors.push(format!("{}: {e}", slot.key())),
        }
    }
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderReliability {
    pub provider: String,
    pub baseline_run: RunId,
    /// `None` when the baseline has no issues.
    pub coverage_consistency: Option<ConsistencySeries>,
    /// `None` while the master set has no non-zero entries.
    pub performance_consistency: Option<ConsistencySeries>,
}

fn ordered_synthetic_runs(state: &ProjectState) -> BTreeMap<&str, Vec<&EvaluationRun>> {
    let mut by_provider: BTreeMap<&str, Vec<&EvaluationRun>> = BTreeMap::new();
    for run in state
        .runs
        .iter()
        .filter(|r| r.evaluator.kind == EvaluatorKind::Synthetic && r.is_complete())
    {
        by_provider.entry(&run.evaluator.label).or_default().push(run);
    }
    for runs in by_provider.values_mut() {
        runs.sort_by(|a, b| (a.timestamp, &a.run_id).cmp(&(b.timestamp, &b.run_id)));
    }
    by_provider
}

/// Baseline issues re-found by `run`: an issue of the run scores at least
/// `auto_accept` against the baseline issue, or both link to the same
/// master entry.
pub fn refound_issues(
    state: &ProjectState,
    baseline: &[&heval_core::model::UsabilityIssue],
    run: &EvaluationRun,
    auto_accept: f64,
) -> Vec<IssueId> {
    let scorer = TokenOverlap::default();
    let text = heval_core::dedup::issue_text;
    let later: Vec<(String, TermVector, Option<&heval_core::model::MasterId>)> = run
        .issues
        .iter()
        .map(|i| (text(i), scorer.vector(&text(i)), state.master_link(i)))
        .collect();
    baseline
        .iter()
        .filter(|b| {
            let b_text = text(b);
            let b_vec = scorer.vector(&b_text);
            let b_link = state.master_link(b);
            later.iter().any(|(t, v, link)| {
                let score = if t.trim() == b_text.trim() { 1.0 } else { b_vec.cosine(v) };
                score >= auto_accept || (b_link.is_some() && b_link == *link)
            })
        })
        .map(|b| b.issue_id.clone())
        .collect()
}

/// Consistency of each provider's complete synthetic runs against its
/// earliest run and against the master set.
pub fn summarize_reliability(state: &ProjectState, auto_accept: f64) -> Vec<ProviderReliability> {
    let reports: BTreeMap<&RunId, _> = state
        .runs
        .iter()
        .map(|r| (&r.run_id, build_match_report(r, &state.master)))
        .collect();
    ordered_synthetic_runs(state)
        .into_iter()
        .map(|(provider, runs)| {
            let baseline = runs[0];
            let canonical: Vec<_> = baseline.canonical_issues().collect();
            let ids: Vec<IssueId> = canonical.iter().map(|i| i.issue_id.clone()).collect();
            let refound: Vec<(RunId, Vec<IssueId>)> = runs[1..]
                .iter()
                .map(|r| (r.run_id.clone(), refound_issues(state, &canonical, r, auto_accept)))
                .collect();
            let pairs: Vec<(RunId, &_)> = runs.iter().map(|r| (r.run_id.clone(), &reports[&r.run_id])).collect();
            ProviderReliability {
                provider: provider.to_string(),
                baseline_run: baseline.run_id.clone(),
                coverage_consistency: coverage_consistency(&baseline.run_id, &ids, &refound).ok(),
                performance_consistency: performance_consistency(&pairs, &state.master).ok(),
            }
        })
        .collect()
}
