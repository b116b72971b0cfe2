//! Domain records shared by every stage of the pipeline.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::sha256_hex;
use crate::heuristic::{Batch, HeuristicId, Severity};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.into())
            }
        }
    };
}

string_id!(
    /// Opaque, project-unique issue identifier.
    IssueId
);
string_id!(RunId);
string_id!(MasterId);
string_id!(ProposalId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MediaKind {
    #[serde(rename = "png")]
    Png,
    #[serde(rename = "jpeg")]
    Jpeg,
}

impl MediaKind {
    /// Detects the media kind from the payload's magic bytes.
    pub fn sniff(bytes: &[u8]) -> Option<MediaKind> {
        if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
            Some(MediaKind::Png)
        } else if bytes.starts_with(&[0xFF, 0xD8, 0xFF]) {
            Some(MediaKind::Jpeg)
        } else {
            None
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            MediaKind::Png => "png",
            MediaKind::Jpeg => "jpg",
        }
    }

    pub fn mime(self) -> &'static str {
        match self {
            MediaKind::Png => "image/png",
            MediaKind::Jpeg => "image/jpeg",
        }
    }
}

/// One screenshot within a task. The image payload is not serialized; the
/// persisted form refers to it by content hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Screenshot {
    pub screen_index: u32,
    pub media_kind: MediaKind,
    pub content_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(skip)]
    pub image_bytes: Vec<u8>,
}

impl Screenshot {
    pub fn new(screen_index: u32, image_bytes: Vec<u8>, caption: Option<String>) -> Result<Self> {
        if image_bytes.is_empty() {
            return Err(Error::InvalidMedia);
        }
        let media_kind = MediaKind::sniff(&image_bytes).ok_or(Error::InvalidMedia)?;
        Ok(Self {
            screen_index,
            media_kind,
            content_hash: sha256_hex(&image_bytes),
            caption,
            image_bytes,
        })
    }

    pub fn has_payload(&self) -> bool {
        !self.image_bytes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserTask {
    pub task_index: u32,
    pub scenario_text: String,
    pub screenshots: Vec<Screenshot>,
}

impl UserTask {
    pub fn screen_count(&self) -> u32 {
        self.screenshots.len() as u32
    }

    pub fn has_screen(&self, index: u32) -> bool {
        index >= 1 && index <= self.screen_count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueSource {
    pub evaluator: String,
    pub run_id: RunId,
}

/// One reported heuristic violation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsabilityIssue {
    pub issue_id: IssueId,
    /// `None` when the evaluator's heuristic label could not be resolved.
    pub heuristic_id: Option<HeuristicId>,
    pub description: String,
    #[serde(default)]
    pub rationale: String,
    #[serde(default)]
    pub reported_severity: Option<Severity>,
    #[serde(default)]
    pub severity_rationale: Option<String>,
    pub screen_refs: Vec<u32>,
    pub task_index: u32,
    pub source: IssueSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duplicate_of: Option<IssueId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EvaluatorKind {
    Synthetic,
    Human,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evaluator {
    pub kind: EvaluatorKind,
    /// Provider name for synthetic runs, evaluator label for human runs.
    pub label: String,
    #[serde(default)]
    pub account_label: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FinishReason {
    Stop,
    LengthLimit,
    Other,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input: u64,
    pub output: u64,
}

/// A provider's answer to one prompt request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub raw_text: String,
    pub finish_reason: FinishReason,
    #[serde(default)]
    pub token_usage: TokenUsage,
    pub latency: core::time::Duration,
    pub timestamp: DateTime<Utc>,
    pub provider_name: String,
    pub attempt_count: u32,
}

impl CompletionResult {
    /// A completed exchange with the given text, for tests and replays.
    pub fn stop(raw_text: impl Into<String>) -> Self {
        Self {
            raw_text: raw_text.into(),
            finish_reason: FinishReason::Stop,
            token_usage: TokenUsage::default(),
            latency: core::time::Duration::ZERO,
            timestamp: DateTime::<Utc>::UNIX_EPOCH,
            provider_name: String::new(),
            attempt_count: 1,
        }
    }
}

/// Summary of one request/response exchange; the verbatim pair lives in the
/// run's transcript journal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub task_index: u32,
    pub batch: Batch,
    pub request_hash: String,
    pub finish_reason: FinishReason,
    pub truncated: bool,
    pub attempt_count: u32,
}

/// Settings that produced a synthetic run, kept for later conditioning.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSettings {
    pub at_least_two_floor: bool,
    #[serde(default)]
    pub prompt_template_hash: Option<String>,
    #[serde(default)]
    pub system_message: Option<String>,
    #[serde(default)]
    pub model_id: Option<String>,
    /// Sampling parameters as sent, or `None` for provider defaults.
    #[serde(default)]
    pub sampling: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationRun {
    pub run_id: RunId,
    pub evaluator: Evaluator,
    pub timestamp: DateTime<Utc>,
    pub app_id: String,
    pub status: RunStatus,
    #[serde(default)]
    pub settings: RunSettings,
    #[serde(default)]
    pub transcripts: Vec<TranscriptRecord>,
    pub issues: Vec<UsabilityIssue>,
}

impl EvaluationRun {
    pub fn is_synthetic(&self) -> bool {
        self.evaluator.kind == EvaluatorKind::Synthetic
    }

    pub fn is_complete(&self) -> bool {
        self.status == RunStatus::Complete
    }

    pub fn truncation_flags(&self) -> impl Iterator<Item = bool> + '_ {
        self.transcripts.iter().map(|t| t.truncated)
    }

    /// Issues that are not confirmed duplicates of another issue.
    pub fn canonical_issues(&self) -> impl Iterator<Item = &UsabilityIssue> {
        self.issues.iter().filter(|i| i.duplicate_of.is_none())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MasterEntry {
    pub master_id: MasterId,
    pub heuristic_id: HeuristicId,
    pub coded_severity: Severity,
    pub canonical_description: String,
    pub contributing_issue_ids: Vec<IssueId>,
    pub across_screen: bool,
    /// Lowest task index among contributing issues.
    pub task_index: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MasterSet {
    pub entries: Vec<MasterEntry>,
}

impl MasterSet {
    pub fn get(&self, id: &MasterId) -> Option<&MasterEntry> {
        self.entries.iter().find(|e| &e.master_id == id)
    }

    pub fn get_mut(&mut self, id: &MasterId) -> Option<&mut MasterEntry> {
        self.entries.iter_mut().find(|e| &e.master_id == id)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Entry each contributing issue belongs to.
    pub fn contributions(&self) -> BTreeMap<&IssueId, &MasterId> {
        self.entries
            .iter()
            .flat_map(|e| e.contributing_issue_ids.iter().map(move |i| (i, &e.master_id)))
            .collect()
    }
}

/// Checks the referential invariants of a task list plus the runs reported
/// against it.
pub fn validate_runs(tasks: &[UserTask], runs: &[EvaluationRun]) -> Result<()> {
    let by_index: BTreeMap<u32, &UserTask> = tasks.iter().map(|t| (t.task_index, t)).collect();
    let mut ids = BTreeSet::new();
    for run in runs {
        for issue in &run.issues {
            if !ids.insert(&issue.issue_id) {
                return Err(Error::InvalidReference(format!(
                    "duplicate issue id {}",
                    issue.issue_id
                )));
            }
            validate_issue(&by_index, issue)?;
        }
    }
    let all: BTreeMap<&IssueId, &UsabilityIssue> = runs
        .iter()
        .flat_map(|r| r.issues.iter())
        .map(|i| (&i.issue_id, i))
        .collect();
    for issue in all.values() {
        if let Some(target) = &issue.duplicate_of {
            if target == &issue.issue_id {
                return Err(Error::InvalidReference(format!(
                    "issue {} is marked a duplicate of itself",
                    issue.issue_id
                )));
            }
            match all.get(target) {
                None => {
                    return Err(Error::InvalidReference(format!(
                        "issue {} duplicates unknown issue {target}",
                        issue.issue_id
                    )))
                }
                Some(canon) if canon.duplicate_of.is_some() => {
                    return Err(Error::InvalidReference(format!(
                        "duplicate chain deeper than one at {}",
                        issue.issue_id
                    )))
                }
                Some(_) => {}
            }
        }
    }
    Ok(())
}

fn validate_issue(tasks: &BTreeMap<u32, &UserTask>, issue: &UsabilityIssue) -> Result<()> {
    let task = tasks.get(&issue.task_index).ok_or_else(|| {
        Error::InvalidReference(format!(
            "issue {} references missing task {}",
            issue.issue_id, issue.task_index
        ))
    })?;
    if issue.screen_refs.is_empty() {
        return Err(Error::InvalidReference(format!(
            "issue {} has no screen references",
            issue.issue_id
        )));
    }
    if let Some(bad) = issue.screen_refs.iter().find(|s| !task.has_screen(**s)) {
        return Err(Error::InvalidReference(format!(
            "issue {} references screen {bad} of task {} which has {} screens",
            issue.issue_id,
            task.task_index,
            task.screen_count()
        )));
    }
    Ok(())
}
