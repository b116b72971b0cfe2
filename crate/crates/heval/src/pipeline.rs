//! Evaluation, duplicate proposal and auto-accept steps over a [`Store`].
//!
//! An evaluation is split in three so that provider calls run without the
//! store: [`prepare_run`] reserves a run id and loads tasks, [`execute_run`]
//! talks to the provider and writes transcripts, and [`Store::add_run`]
//! records the result.

use std::path::PathBuf;

use chrono::Utc;
use heval_core::dedup::{
    match_to_master, propose_groups, propose_groups_with, MatchStatus, ProposalBatch,
    ProposalStatus, SimilarityMethod, TokenOverlap,
};
use heval_core::model::{
    Evaluator, EvaluatorKind, EvaluationRun, IssueId, IssueSource, RunId, RunSettings, RunStatus,
    TranscriptRecord, UsabilityIssue, UserTask,
};
use heval_core::parse::{parse_issues, ParseWarning, TaskContext};
use heval_core::prompt::{build_evaluation_prompts, PromptOptions, PromptRequest};
use heval_core::text::Stopwords;
use heval_core::triage::DecisionKind;
use heval_core::Batch;
use serde::Serialize;

use crate::error::{HevalError, Result};
use crate::gateway::Gateway;
use crate::store::Store;
use crate::transcript::{RequestRecord, TranscriptLine, TranscriptWriter};

pub const AUTO_ACCEPT_ACTOR: &str = "auto-accept";

#[derive(Debug, Clone)]
pub struct EvaluateOptions {
    /// Task indices to evaluate; empty means all.
    pub tasks: Vec<u32>,
    pub account: Option<String>,
    pub at_least_two_floor: bool,
    pub system_message: Option<String>,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        Self {
            tasks: Vec::new(),
            account: None,
            at_least_two_floor: true,
            system_message: None,
        }
    }
}

/// Everything [`execute_run`] needs, detached from the store.
#[derive(Debug, Clone)]
pub struct RunJob {
    pub run_id: RunId,
    pub app_id: String,
    pub tasks: Vec<UserTask>,
    pub prompt: PromptOptions,
    pub account: Option<String>,
    pub transcript_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub run_id: RunId,
    pub status: RunStatus,
    pub issues: usize,
    pub warnings: usize,
    pub truncated_batches: usize,
    pub exchanges: usize,
}

pub fn prepare_run(store: &mut Store, provider: &str, options: &EvaluateOptions) -> Result<RunJob> {
    let state = store.state();
    if state.tasks.is_empty() {
        return Err(HevalError::Invalid("project has no tasks; run `heval ingest` first".into()));
    }
    let indices: Vec<u32> = if options.tasks.is_empty() {
        state.tasks.iter().map(|t| t.task_index).collect()
    } else {
        options.tasks.clone()
    };
    let mut tasks = Vec::new();
    for i in indices {
        tasks.push(store.task_with_images(i)?);
    }
    let prompt = PromptOptions {
        at_least_two_floor: options.at_least_two_floor,
        templates: store.prompt_templates()?,
        system_text: options.system_message.clone(),
    };
    let label = match &options.account {
        Some(a) => format!("{provider}-{a}"),
        None => provider.to_string(),
    };
    let run_id = store.allocate_run_id(&label)?;
    Ok(RunJob {
        transcript_path: store.run_dir(&run_id).join("transcripts.jsonl"),
        app_id: store.state().app_id.clone(),
        run_id,
        tasks,
        prompt,
        account: options.account.clone(),
    })
}

fn batch_number(batch: Batch) -> u8 {
    match batch {
        Batch::FirstFive => 1,
        Batch::SecondFive => 2,
    }
}

/// Sends both prompts for every task, journaling each exchange before it
/// is parsed. A provider failure marks the run Failed and keeps what was
/// collected up to that point.
pub fn execute_run(job: &RunJob, gateway: &Gateway) -> Result<(EvaluationRun, Vec<ParseWarning>)> {
    let desc = gateway.descriptor();
    let mut writer = TranscriptWriter::append_to(&job.transcript_path)?;
    let evaluator = Evaluator {
        kind: EvaluatorKind::Synthetic,
        label: desc.name.clone(),
        account_label: job.account.clone(),
    };
    let mut run = EvaluationRun {
        run_id: job.run_id.clone(),
        evaluator: evaluator.clone(),
        timestamp: Utc::now(),
        app_id: job.app_id.clone(),
        status: RunStatus::Complete,
        settings: RunSettings {
            at_least_two_floor: job.prompt.at_least_two_floor,
            prompt_template_hash: Some(job.prompt.templates.content_hash()),
            system_message: job.prompt.system_text.clone(),
            model_id: Some(desc.model_id.clone()),
            sampling: desc.sampling_summary(),
        },
        transcripts: Vec::new(),
        issues: Vec::new(),
    };
    let mut warnings = Vec::new();
    'tasks: for task in &job.tasks {
        for request in build_evaluation_prompts(task, &job.prompt)? {
            let request_hash = request.content_hash();
            let result = gateway.complete(&request, job.account.as_deref());
            writer.write(&TranscriptLine {
                run_id: job.run_id.clone(),
                task_index: task.task_index,
                batch: request.batch,
                request_hash: request_hash.clone(),
                provider: desc.name.clone(),
                account: job.account.clone(),
                model_id: desc.model_id.clone(),
                request: RequestRecord::of(&request, desc.max_output_tokens),
                response: result.as_ref().ok().cloned(),
                error: result.as_ref().err().map(|e| e.to_string()),
            })?;
            let completion = match result {
                Ok(c) => c,
                Err(e) => {
                    run.status = RunStatus::Failed {
                        reason: e.to_string(),
                    };
                    break 'tasks;
                }
            };
            let outcome = parse_issues(
                &completion,
                request.batch,
                TaskContext {
                    task_index: task.task_index,
                    screen_count: task.screen_count(),
                },
            );
            run.transcripts.push(TranscriptRecord {
                task_index: task.task_index,
                batch: request.batch,
                request_hash,
                finish_reason: completion.finish_reason,
                truncated: outcome.truncated,
                attempt_count: completion.attempt_count,
            });
            let source = IssueSource {
                evaluator: evaluator.label.clone(),
                run_id: run.run_id.clone(),
            };
            for (n, parsed) in outcome.issues.into_iter().enumerate() {
                let id = IssueId::new(format!(
                    "{}-t{}-b{}-{:03}",
                    run.run_id,
                    task.task_index,
                    batch_number(request.batch),
                    n + 1
                ));
                run.issues.push(parsed.into_issue(id, source.clone()));
            }
            warnings.extend(outcome.warnings);
        }
    }
    Ok((run, warnings))
}

pub fn summarize(run: &EvaluationRun, warnings: &[ParseWarning]) -> RunSummary {
    RunSummary {
        run_id: run.run_id.clone(),
        status: run.status.clone(),
        issues: run.issues.len(),
        warnings: warnings.len(),
        truncated_batches: run.truncation_flags().filter(|t| *t).count(),
        exchanges: run.transcripts.len(),
    }
}

/// Runs one synthetic evaluation end to end and records it.
pub fn evaluate(store: &mut Store, gateway: &Gateway, options: &EvaluateOptions) -> Result<RunSummary> {
    let job = prepare_run(store, gateway.name(), options)?;
    let (run, warnings) = execute_run(&job, gateway)?;
    let summary = summarize(&run, &warnings);
    store.add_run(run, &warnings)?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy)]
pub struct DedupOptions {
    pub threshold: f64,
    pub auto_accept: f64,
}

impl Default for DedupOptions {
    fn default() -> Self {
        Self {
            threshold: heval_core::dedup::DEFAULT_GROUP_THRESHOLD,
            auto_accept: heval_core::dedup::DEFAULT_AUTO_ACCEPT,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DedupSummary {
    pub proposals_added: usize,
    pub link_candidates: usize,
    pub auto_acceptable_links: usize,
}

/// Question sent to a judge model for one pair. The reply counts as a
/// match when it starts with "yes".
pub fn judge_request(a: &UsabilityIssue, b: &UsabilityIssue) -> PromptRequest {
    let user_text = format!(
        "Do these two usability issue reports describe the same underlying problem? \
         Answer with a single word, yes or no.\n\nReport A: {}\n\nReport B: {}",
        heval_core::dedup::issue_text(a),
        heval_core::dedup::issue_text(b)
    );
    PromptRequest {
        task_index: a.task_index,
        system_text: None,
        user_text,
        attachments: Vec::new(),
        batch: Batch::FirstFive,
        target_heuristics: Vec::new(),
        response_format_instructions: String::new(),
    }
}

/// Proposes duplicate groups inside each complete run, skipping groups
/// already on record, then proposes master links for issues not yet
/// linked. With a judge, pairs sharing at least one content word are
/// scored by the judge.
pub fn dedup(store: &mut Store, options: DedupOptions, judge: Option<&Gateway>) -> Result<DedupSummary> {
    let mut summary = DedupSummary::default();
    let stopwords = Stopwords::shipped();
    let overlap = TokenOverlap::default();
    let runs: Vec<EvaluationRun> = store
        .state()
        .runs
        .iter()
        .filter(|r| r.is_complete())
        .cloned()
        .collect();
    for run in &runs {
        let (method, proposals) = match judge {
            None => (
                SimilarityMethod::TokenOverlap,
                propose_groups(&run.issues, options.threshold, true)?,
            ),
            Some(judge) => {
                let mut failure = None;
                let proposals = propose_groups_with(
                    &run.issues,
                    options.threshold,
                    true,
                    SimilarityMethod::LlmJudge,
                    |a, b| {
                        if failure.is_some() || overlap.similarity(a, b).value == 0.0 {
                            return 0.0;
                        }
                        match judge.complete(&judge_request(a, b), None) {
                            Ok(c) if c.raw_text.trim().to_ascii_lowercase().starts_with("yes") => 1.0,
                            Ok(_) => 0.0,
                            Err(e) => {
                                failure = Some(e);
                                0.0
                            }
                        }
                    },
                )?;
                if let Some(e) = failure {
                    return Err(e.into());
                }
                (SimilarityMethod::LlmJudge, proposals)
            }
        };
        summary.proposals_added += store.add_proposals(ProposalBatch {
            threshold: options.threshold,
            constrain_same_heuristic: true,
            method,
            stopword_version: stopwords.version().map(String::from),
            stopword_hash: stopwords.hash().to_string(),
            proposals,
        })?;
    }

    let state = store.state();
    if !state.master.is_empty() {
        let unlinked: Vec<UsabilityIssue> = state
            .runs
            .iter()
            .filter(|r| r.is_complete())
            .flat_map(|r| r.issues.iter())
            .filter(|i| i.duplicate_of.is_none() && state.master_link(i).is_none())
            .cloned()
            .collect();
        let matches = match_to_master(&unlinked, &state.master, options.threshold, options.auto_accept)?;
        summary.link_candidates = matches.iter().filter(|m| m.status != MatchStatus::Unmatched).count();
        summary.auto_acceptable_links = matches
            .iter()
            .filter(|m| m.status == MatchStatus::AutoAccepted)
            .count();
        store.set_link_candidates(matches)?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AutoAcceptSummary {
    pub groups_confirmed: usize,
    pub links_confirmed: usize,
    /// Candidates skipped because an earlier decision already covered them.
    pub skipped: usize,
}

/// Confirms every open proposal whose mean score reaches `auto_accept` and
/// every AutoAccepted master link, as decisions by [`AUTO_ACCEPT_ACTOR`].
pub fn auto_accept(store: &mut Store, auto_accept: f64) -> Result<AutoAcceptSummary> {
    let mut summary = AutoAcceptSummary::default();
    let groups: Vec<_> = store
        .state()
        .proposals()
        .filter(|p| p.status == ProposalStatus::Proposed && p.mean_pairwise_score >= auto_accept)
        .map(|p| p.proposal_id.clone())
        .collect();
    for proposal_id in groups {
        let kind = DecisionKind::ConfirmGroup {
            proposal_id,
            canonical: None,
        };
        match store.apply(AUTO_ACCEPT_ACTOR, kind, None) {
            Ok(_) => summary.groups_confirmed += 1,
            Err(HevalError::Core(heval_core::Error::Conflict(_))) => summary.skipped += 1,
            Err(e) => return Err(e),
        }
    }
    let links: Vec<_> = store
        .state()
        .link_candidates
        .iter()
        .filter(|c| c.status == MatchStatus::AutoAccepted && c.score >= auto_accept)
        .map(|c| (c.issue_id.clone(), c.master_id.clone()))
        .collect();
    for (issue_id, master_id) in links {
        let state = store.state();
        let open = state
            .issue(&issue_id)
            .is_some_and(|i| i.duplicate_of.is_none() && state.master_link(i).is_none());
        if !open {
            summary.skipped += 1;
            continue;
        }
        match store.apply(AUTO_ACCEPT_ACTOR, DecisionKind::ConfirmMasterLink { issue_id, master_id }, None) {
            Ok(_) => summary.links_confirmed += 1,
            Err(HevalError::Core(heval_core::Error::Conflict(_))) => summary.skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(summary)
}
