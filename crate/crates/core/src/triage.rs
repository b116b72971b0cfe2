//! Project state and the triage decisions that evolve it.
//!
//! State splits into inputs (tasks, runs as parsed or imported, duplicate
//! proposals, master-link candidates) and everything derived by folding the
//! decision journal over them: duplicate links, proposal statuses, issue
//! heuristic codes and the master set. Inputs are append-only and decisions
//! only refer to inputs that existed when they were made, so replaying the
//! journal over the inputs always reproduces the live state.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::dedup::{DuplicateProposal, MasterMatch, ProposalBatch, ProposalStatus};
use crate::error::{Error, Result};
use crate::heuristic::{HeuristicId, Severity};
use crate::model::{
    validate_runs, EvaluationRun, IssueId, MasterEntry, MasterId, MasterSet, ProposalId,
    UsabilityIssue, UserTask,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "id", rename_all = "snake_case")]
pub enum CodeTarget {
    Issue(IssueId),
    Master(MasterId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum DecisionKind {
    ConfirmGroup {
        proposal_id: ProposalId,
        /// Overrides the proposal's canonical candidate.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        canonical: Option<IssueId>,
    },
    RejectGroup {
        proposal_id: ProposalId,
    },
    CodeSeverity {
        master_id: MasterId,
        rating: Severity,
    },
    CodeHeuristic {
        target: CodeTarget,
        heuristic_id: HeuristicId,
    },
    ConfirmMasterLink {
        issue_id: IssueId,
        master_id: MasterId,
    },
    MarkAcrossScreen {
        master_id: MasterId,
        across_screen: bool,
    },
    PromoteToMaster {
        issue_id: IssueId,
        coded_severity: Severity,
        /// Defaults to the issue's own heuristic.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        heuristic_id: Option<HeuristicId>,
        #[serde(default)]
        across_screen: bool,
        /// Defaults to the issue's description.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        description: Option<String>,
    },
}

impl DecisionKind {
    pub fn name(&self) -> &'static str {
        match self {
            DecisionKind::ConfirmGroup { .. } => "ConfirmGroup",
            DecisionKind::RejectGroup { .. } => "RejectGroup",
            DecisionKind::CodeSeverity { .. } => "CodeSeverity",
            DecisionKind::CodeHeuristic { .. } => "CodeHeuristic",
            DecisionKind::ConfirmMasterLink { .. } => "ConfirmMasterLink",
            DecisionKind::MarkAcrossScreen { .. } => "MarkAcrossScreen",
            DecisionKind::PromoteToMaster { .. } => "PromoteToMaster",
        }
    }
}

/// One journaled human (or auto-accept) decision. Immutable once written.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriageDecision {
    /// 1-based position in the journal.
    pub decision_id: u64,
    pub actor: String,
    pub timestamp: DateTime<Utc>,
    #[serde(flatten)]
    pub kind: DecisionKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectState {
    pub app_id: String,
    pub name: String,
    pub created_at: DateTime<Utc>,
    pub schema_version: u32,
    pub tasks: Vec<UserTask>,
    pub runs: Vec<EvaluationRun>,
    pub proposal_batches: Vec<ProposalBatch>,
    pub link_candidates: Vec<MasterMatch>,
    pub master: MasterSet,
    /// Heuristic codes assigned to issues during triage; the issue keeps the
    /// heuristic it was reported under.
    #[serde(default)]
    pub issue_heuristics: BTreeMap<IssueId, HeuristicId>,
    /// Number of decisions applied.
    pub master_version: u64,
    pub journal: Vec<TriageDecision>,
}

fn stale(what: impl core::fmt::Display) -> Error {
    Error::StaleDecision(what.to_string())
}

impl ProjectState {
    pub fn new(app_id: impl Into<String>, name: impl Into<String>, created_at: DateTime<Utc>) -> Self {
        Self {
            app_id: app_id.into(),
            name: name.into(),
            created_at,
            schema_version: SCHEMA_VERSION,
            tasks: Vec::new(),
            runs: Vec::new(),
            proposal_batches: Vec::new(),
            link_candidates: Vec::new(),
            master: MasterSet::default(),
            issue_heuristics: BTreeMap::new(),
            master_version: 0,
            journal: Vec::new(),
        }
    }

    pub fn task(&self, index: u32) -> Option<&UserTask> {
        self.tasks.iter().find(|t| t.task_index == index)
    }

    pub fn next_task_index(&self) -> u32 {
        self.tasks.iter().map(|t| t.task_index).max().unwrap_or(0) + 1
    }

    pub fn run(&self, id: &str) -> Option<&EvaluationRun> {
        self.runs.iter().find(|r| r.run_id.as_str() == id)
    }

    pub fn issues(&self) -> impl Iterator<Item = &UsabilityIssue> {
        self.runs.iter().flat_map(|r| r.issues.iter())
    }

    pub fn issue(&self, id: &IssueId) -> Option<&UsabilityIssue> {
        self.issues().find(|i| &i.issue_id == id)
    }

    /// The triage code for an issue if any, else its reported heuristic.
    pub fn effective_heuristic(&self, issue: &UsabilityIssue) -> Option<HeuristicId> {
        self.issue_heuristics
            .get(&issue.issue_id)
            .copied()
            .or(issue.heuristic_id)
    }

    fn issue_mut(&mut self, id: &IssueId) -> Option<&mut UsabilityIssue> {
        self.runs
            .iter_mut()
            .flat_map(|r| r.issues.iter_mut())
            .find(|i| &i.issue_id == id)
    }

    pub fn proposals(&self) -> impl Iterator<Item = &DuplicateProposal> {
        self.proposal_batches.iter().flat_map(|b| b.proposals.iter())
    }

    pub fn proposal(&self, id: &ProposalId) -> Option<&DuplicateProposal> {
        self.proposals().find(|p| &p.proposal_id == id)
    }

    /// Appends a task; its index must be the next free one.
    pub fn add_task(&mut self, task: UserTask) -> Result<()> {
        if task.task_index != self.next_task_index() {
            return Err(Error::InvalidReference(format!(
                "task index {} is not the next index {}",
                task.task_index,
                self.next_task_index()
            )));
        }
        if task.screenshots.is_empty() {
            return Err(Error::EmptyTask(task.task_index));
        }
        self.tasks.push(task);
        Ok(())
    }

    /// Appends a run after checking its references against the tasks.
    pub fn add_run(&mut self, run: EvaluationRun) -> Result<()> {
        if self.run(run.run_id.as_str()).is_some() {
            return Err(Error::InvalidReference(format!("run {} already exists", run.run_id)));
        }
        if let Some(i) = run.issues.iter().find(|i| i.duplicate_of.is_some()) {
            return Err(Error::InvalidReference(format!(
                "new run issue {} already carries a duplicate link",
                i.issue_id
            )));
        }
        self.runs.push(run);
        if let Err(e) = validate_runs(&self.tasks, &self.runs) {
            self.runs.pop();
            return Err(e);
        }
        Ok(())
    }

    /// Appends a proposal batch, dropping proposals whose member set was
    /// already proposed. Returns the number kept.
    pub fn add_proposal_batch(&mut self, mut batch: ProposalBatch) -> usize {
        batch
            .proposals
            .retain(|p| self.proposal(&p.proposal_id).is_none());
        for p in &mut batch.proposals {
            p.status = ProposalStatus::Proposed;
        }
        let kept = batch.proposals.len();
        if kept > 0 {
            self.proposal_batches.push(batch);
        }
        kept
    }

    /// Replaces the link candidates of the issues covered by `matches`.
    pub fn set_link_candidates(&mut self, matches: Vec<MasterMatch>) {
        self.link_candidates
            .retain(|c| !matches.iter().any(|m| m.issue_id == c.issue_id));
        self.link_candidates.extend(matches);
        self.link_candidates.sort_by(|a, b| a.issue_id.cmp(&b.issue_id));
    }

    /// Master entry an issue contributes to, directly or via its canonical.
    pub fn master_link(&self, issue: &UsabilityIssue) -> Option<&MasterId> {
        let find = |id: &IssueId| {
            self.master
                .entries
                .iter()
                .find(|e| e.contributing_issue_ids.contains(id))
                .map(|e| &e.master_id)
        };
        find(&issue.issue_id).or_else(|| issue.duplicate_of.as_ref().and_then(find))
    }

    /// Builds the next decision record for `kind`.
    pub fn decide(&self, actor: &str, timestamp: DateTime<Utc>, kind: DecisionKind) -> TriageDecision {
        TriageDecision {
            decision_id: self.journal.len() as u64 + 1,
            actor: actor.into(),
            timestamp,
            kind,
        }
    }

    /// Checks that a decision applies cleanly, without changing anything.
    pub fn validate(&self, decision: &TriageDecision) -> Result<()> {
        let expected = self.journal.len() as u64 + 1;
        if decision.decision_id != expected {
            return Err(stale(format_args!(
                "decision id {} does not follow journal position {}",
                decision.decision_id,
                expected - 1
            )));
        }
        match &decision.kind {
            DecisionKind::ConfirmGroup {
                proposal_id,
                canonical,
            } => {
                let p = self.open_proposal(proposal_id)?;
                let canonical = canonical.as_ref().unwrap_or(&p.canonical_candidate);
                if !p.group.contains(canonical) {
                    return Err(stale(format_args!(
                        "canonical {canonical} is not in proposal {proposal_id}"
                    )));
                }
                for member in &p.group {
                    let issue = self.issue(member).ok_or_else(|| stale(format_args!("unknown issue {member}")))?;
                    if let Some(c) = &issue.duplicate_of {
                        return Err(Error::Conflict(format!(
                            "issue {member} is already a duplicate of {c}"
                        )));
                    }
                    if member != canonical
                        && self.issues().any(|i| i.duplicate_of.as_ref() == Some(member))
                    {
                        return Err(Error::Conflict(format!(
                            "issue {member} is already canonical for other duplicates"
                        )));
                    }
                }
                Ok(())
            }
            DecisionKind::RejectGroup { proposal_id } => self.open_proposal(proposal_id).map(|_| ()),
            DecisionKind::CodeSeverity { master_id, .. }
            | DecisionKind::MarkAcrossScreen { master_id, .. } => self.entry(master_id).map(|_| ()),
            DecisionKind::CodeHeuristic { target, .. } => match target {
                CodeTarget::Issue(id) => self
                    .issue(id)
                    .map(|_| ())
                    .ok_or_else(|| stale(format_args!("unknown issue {id}"))),
                CodeTarget::Master(id) => self.entry(id).map(|_| ()),
            },
            DecisionKind::ConfirmMasterLink { issue_id, master_id } => {
                self.entry(master_id)?;
                let issue = self.issue(issue_id).ok_or_else(|| stale(format_args!("unknown issue {issue_id}")))?;
                self.ensure_unlinked(issue)
            }
            DecisionKind::PromoteToMaster {
                issue_id,
                heuristic_id,
                ..
            } => {
                let issue = self.issue(issue_id).ok_or_else(|| stale(format_args!("unknown issue {issue_id}")))?;
                if let Some(c) = &issue.duplicate_of {
                    return Err(Error::Conflict(format!(
                        "issue {issue_id} is a duplicate of {c}; promote the canonical issue"
                    )));
                }
                self.ensure_unlinked(issue)?;
                if heuristic_id.or(self.effective_heuristic(issue)).is_none() {
                    return Err(Error::InvalidReference(format!(
                        "issue {issue_id} has no heuristic; code one before promoting"
                    )));
                }
                Ok(())
            }
        }
    }

    fn open_proposal(&self, id: &ProposalId) -> Result<&DuplicateProposal> {
        let p = self
            .proposal(id)
            .ok_or_else(|| stale(format_args!("unknown proposal {id}")))?;
        if p.status != ProposalStatus::Proposed {
            return Err(Error::Conflict(format!("proposal {id} is already {:?}", p.status)));
        }
        Ok(p)
    }

    fn entry(&self, id: &MasterId) -> Result<&MasterEntry> {
        self.master
            .get(id)
            .ok_or_else(|| stale(format_args!("unknown master entry {id}")))
    }

    fn ensure_unlinked(&self, issue: &UsabilityIssue) -> Result<()> {
        match self.master_link(issue) {
            Some(m) => Err(Error::Conflict(format!(
                "issue {} is already linked to master entry {m}",
                issue.issue_id
            ))),
            None => Ok(()),
        }
    }

    /// Validates and applies a decision, appending it to the journal.
    pub fn apply(&mut self, decision: TriageDecision) -> Result<()> {
        self.validate(&decision)?;
        match &decision.kind {
            DecisionKind::ConfirmGroup {
                proposal_id,
                canonical,
            } => {
                let p = self.proposal(proposal_id).cloned().expect("validated");
                let canonical = canonical.clone().unwrap_or(p.canonical_candidate.clone());
                for member in p.group.iter().filter(|m| **m != canonical) {
                    self.issue_mut(member).expect("validated").duplicate_of = Some(canonical.clone());
                }
                self.set_proposal_status(proposal_id, ProposalStatus::Confirmed);
            }
            DecisionKind::RejectGroup { proposal_id } => {
                self.set_proposal_status(proposal_id, ProposalStatus::Rejected);
            }
            DecisionKind::CodeSeverity { master_id, rating } => {
                self.master.get_mut(master_id).expect("validated").coded_severity = *rating;
            }
            DecisionKind::CodeHeuristic {
                target,
                heuristic_id,
            } => match target {
                CodeTarget::Issue(id) => {
                    self.issue_heuristics.insert(id.clone(), *heuristic_id);
                }
                CodeTarget::Master(id) => {
                    self.master.get_mut(id).expect("validated").heuristic_id = *heuristic_id;
                }
            },
            DecisionKind::ConfirmMasterLink { issue_id, master_id } => {
                let task = self.issue(issue_id).expect("validated").task_index;
                let entry = self.master.get_mut(master_id).expect("validated");
                entry.contributing_issue_ids.push(issue_id.clone());
                entry.task_index = entry.task_index.min(task);
            }
            DecisionKind::MarkAcrossScreen {
                master_id,
                across_screen,
            } => {
                self.master.get_mut(master_id).expect("validated").across_screen = *across_screen;
            }
            DecisionKind::PromoteToMaster {
                issue_id,
                coded_severity,
                heuristic_id,
                across_screen,
                description,
            } => {
                let issue = self.issue(issue_id).expect("validated");
                let entry = MasterEntry {
                    master_id: MasterId(format!("M{:03}", self.master.len() + 1)),
                    heuristic_id: heuristic_id
                        .or(self.effective_heuristic(issue))
                        .expect("validated"),
                    coded_severity: *coded_severity,
                    canonical_description: description
                        .clone()
                        .unwrap_or_else(|| issue.description.clone()),
                    contributing_issue_ids: alloc::vec![issue_id.clone()],
                    across_screen: *across_screen,
                    task_index: issue.task_index,
                };
                self.master.entries.push(entry);
            }
        }
        self.journal.push(decision);
        self.master_version = self.journal.len() as u64;
        Ok(())
    }

    fn set_proposal_status(&mut self, id: &ProposalId, status: ProposalStatus) {
        for p in self
            .proposal_batches
            .iter_mut()
            .flat_map(|b| b.proposals.iter_mut())
            .filter(|p| &p.proposal_id == id)
        {
            p.status = status;
        }
    }

    /// The inputs with every decision-derived field reset.
    pub fn base(&self) -> ProjectState {
        let mut base = self.clone();
        for issue in base.runs.iter_mut().flat_map(|r| r.issues.iter_mut()) {
            issue.duplicate_of = None;
        }
        base.master = MasterSet::default();
        base.issue_heuristics.clear();
        base.master_version = 0;
        base.journal.clear();
        for p in base.proposal_batches.iter_mut().flat_map(|b| b.proposals.iter_mut()) {
            p.status = ProposalStatus::Proposed;
        }
        base
    }

    /// Folds `decisions` over `base` (which must carry no decisions yet).
    pub fn replay(mut base: ProjectState, decisions: &[TriageDecision]) -> Result<ProjectState> {
        for d in decisions {
            base.apply(d.clone())?;
        }
        Ok(base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dedup::{propose_groups, SimilarityMethod};
    use crate::model::{Evaluator, EvaluatorKind, IssueSource, RunSettings, RunStatus, Screenshot};
    use alloc::vec;

    const PNG: &[u8] = b"\x89PNG\r\n\x1a\nxx";

    fn t0() -> DateTime<Utc> {
        DateTime::<Utc>::UNIX_EPOCH
    }

    fn issue(id: &str, description: &str) -> UsabilityIssue {
        UsabilityIssue {
            issue_id: id.into(),
            heuristic_id: Some(HeuristicId::new(1).unwrap()),
            description: description.into(),
            rationale: String::new(),
            reported_severity: Severity::new(2).ok(),
            severity_rationale: None,
            screen_refs: vec![1],
            task_index: 1,
            source: IssueSource {
                evaluator: "mock".into(),
                run_id: "r1".into(),
            },
            duplicate_of: None,
        }
    }

    fn state() -> ProjectState {
        let mut s = ProjectState::new("app", "App", t0());
        s.add_task(UserTask {
            task_index: 1,
            scenario_text: "s".into(),
            screenshots: vec![Screenshot::new(1, PNG.to_vec(), None).unwrap()],
        })
        .unwrap();
        s.add_run(EvaluationRun {
            run_id: "r1".into(),
            evaluator: Evaluator {
                kind: EvaluatorKind::Synthetic,
                label: "mock".into(),
                account_label: None,
            },
            timestamp: t0(),
            app_id: "app".into(),
            status: RunStatus::Complete,
            settings: RunSettings::default(),
            transcripts: vec![],
            issues: vec![
                issue("a", "no progress indication"),
                issue("b", "lack of onboarding or progress indicator"),
                issue("c", "no indicator pointing out where users are in the setup process"),
                issue("d", "logo is blurry"),
            ],
        })
        .unwrap();
        let proposals = propose_groups(&s.runs[0].issues, 0.35, true).unwrap();
        s.add_proposal_batch(ProposalBatch {
            threshold: 0.35,
            constrain_same_heuristic: true,
            method: SimilarityMethod::TokenOverlap,
            stopword_version: None,
            stopword_hash: String::new(),
            proposals,
        });
        s
    }

    fn act(s: &mut ProjectState, kind: DecisionKind) -> Result<()> {
        let d = s.decide("tester", t0(), kind);
        s.apply(d)
    }

    #[test]
    fn confirm_group_links_duplicates_once() {
        let mut s = state();
        let p = s.proposals().next().unwrap().clone();
        assert_eq!(p.group.len(), 3);
        act(&mut s, DecisionKind::ConfirmGroup { proposal_id: p.proposal_id.clone(), canonical: None }).unwrap();
        let dups: Vec<_> = s.issues().filter(|i| i.duplicate_of.is_some()).collect();
        assert_eq!(dups.len(), 2);
        assert!(dups.iter().all(|i| i.duplicate_of == Some("a".into())));
        assert_eq!(s.master_version, 1);

        let again = act(&mut s, DecisionKind::ConfirmGroup { proposal_id: p.proposal_id, canonical: None });
        assert!(matches!(again, Err(Error::Conflict(_))));
        assert_eq!(s.journal.len(), 1);
    }

    #[test]
    fn dangling_references_are_stale() {
        let mut s = state();
        let err = act(&mut s, DecisionKind::CodeSeverity { master_id: "M404".into(), rating: Severity::ZERO });
        assert!(matches!(err, Err(Error::StaleDecision(_))));
        assert!(s.journal.is_empty());
        let mut d = s.decide("x", t0(), DecisionKind::RejectGroup { proposal_id: "P-x".into() });
        d.decision_id = 7;
        assert!(matches!(s.apply(d), Err(Error::StaleDecision(_))));
    }

    #[test]
    fn promote_link_and_code() {
        let mut s = state();
        act(&mut s, DecisionKind::PromoteToMaster {
            issue_id: "d".into(),
            coded_severity: Severity::new(1).unwrap(),
            heuristic_id: HeuristicId::new(8).ok(),
            across_screen: false,
            description: None,
        })
        .unwrap();
        assert_eq!(s.master.entries[0].master_id.as_str(), "M001");
        assert_eq!(s.master.entries[0].heuristic_id.get(), 8);
        act(&mut s, DecisionKind::ConfirmMasterLink { issue_id: "a".into(), master_id: "M001".into() }).unwrap();
        let dup = act(&mut s, DecisionKind::ConfirmMasterLink { issue_id: "a".into(), master_id: "M001".into() });
        assert!(matches!(dup, Err(Error::Conflict(_))));
        act(&mut s, DecisionKind::CodeSeverity { master_id: "M001".into(), rating: Severity::ZERO }).unwrap();
        act(&mut s, DecisionKind::MarkAcrossScreen { master_id: "M001".into(), across_screen: true }).unwrap();
        act(&mut s, DecisionKind::CodeHeuristic { target: CodeTarget::Issue("b".into()), heuristic_id: HeuristicId::new(4).unwrap() }).unwrap();
        let b = s.issue(&"b".into()).unwrap();
        assert_eq!(s.effective_heuristic(b), HeuristicId::new(4).ok());
        assert_eq!(b.heuristic_id, HeuristicId::new(1).ok());
        assert!(s.master.entries[0].across_screen);
        assert_eq!(s.master.entries[0].coded_severity, Severity::ZERO);

        let replayed = ProjectState::replay(s.base(), &s.journal).unwrap();
        assert_eq!(replayed, s);
    }

    #[test]
    fn decision_json_shape() {
        let d = TriageDecision {
            decision_id: 1,
            actor: "a".into(),
            timestamp: t0(),
            kind: DecisionKind::CodeSeverity { master_id: "M001".into(), rating: Severity::new(3).unwrap() },
        };
        let json = serde_json::to_string(&d).unwrap();
        assert!(json.contains(r#""kind":"CodeSeverity","payload":{"master_id":"M001","rating":3}"#), "{json}");
        assert_eq!(serde_json::from_str::<TriageDecision>(&json).unwrap(), d);
    }
}
