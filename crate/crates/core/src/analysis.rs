//! Everything the report and the triage API show about a project, computed
//! from its state in one pass.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::coverage::{
    aggregate_union, build_match_report, coverage, duplicate_stats, mean_individual_coverage,
    per_heuristic, per_severity, per_task_trend, severity_zero_hits, CoverageStats, DuplicateStats,
    MatchReport, TaskTrend,
};
use crate::dedup::{MatchStatus, ProposalStatus};
use crate::model::{Evaluator, EvaluatorKind, RunId, RunStatus};
use crate::reliability::{mean_and_sample_sd, ConsistencyKind, ConsistencySeries, RunRatio};
use crate::triage::ProjectState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAnalysis {
    pub run_id: RunId,
    pub evaluator: Evaluator,
    pub status: RunStatus,
    pub issue_count: usize,
    pub unmatched: usize,
    pub truncated_batches: usize,
    pub duplicates: DuplicateStats,
    /// `None` while the master set has no non-zero entries.
    pub coverage: Option<CoverageStats>,
    pub severity_zero_hits: usize,
    pub per_heuristic: Vec<CoverageStats>,
    pub per_severity: Vec<CoverageStats>,
    pub per_task: Option<TaskTrend>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnionAnalysis {
    pub kind: EvaluatorKind,
    pub run_ids: Vec<RunId>,
    pub coverage: Option<CoverageStats>,
    pub severity_zero_hits: usize,
    pub per_heuristic: Vec<CoverageStats>,
    pub per_severity: Vec<CoverageStats>,
    pub per_task: Option<TaskTrend>,
    /// Mean of the members' individual coverage ratios.
    pub mean_individual: Option<f64>,
}

/// Performance consistency of one provider's complete runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderSummary {
    pub provider: String,
    pub series: ConsistencySeries,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenTriage {
    pub proposals: usize,
    pub link_candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSnapshot {
    pub app_id: String,
    pub name: String,
    pub master_version: u64,
    pub master_entries: usize,
    pub nonzero_entries: usize,
    pub severity_zero_entries: usize,
    pub across_screen_entries: usize,
    pub runs: Vec<RunAnalysis>,
    pub unions: Vec<UnionAnalysis>,
    pub providers: Vec<ProviderSummary>,
    pub open_triage: OpenTriage,
}

impl AnalysisSnapshot {
    pub fn run(&self, id: &str) -> Option<&RunAnalysis> {
        self.runs.iter().find(|r| r.run_id.as_str() == id)
    }

    pub fn union(&self, kind: EvaluatorKind) -> Option<&UnionAnalysis> {
        self.unions.iter().find(|u| u.kind == kind)
    }
}

/// Match reports of every run in `state`, keyed by run id.
pub fn match_reports(state: &ProjectState) -> BTreeMap<RunId, MatchReport> {
    state
        .runs
        .iter()
        .map(|r| (r.run_id.clone(), build_match_report(r, &state.master)))
        .collect()
}

pub fn analyze(state: &ProjectState) -> AnalysisSnapshot {
    let master = &state.master;
    let reports = match_reports(state);
    let runs: Vec<RunAnalysis> = state
        .runs
        .iter()
        .map(|run| {
            let report = &reports[&run.run_id];
            RunAnalysis {
                run_id: run.run_id.clone(),
                evaluator: run.evaluator.clone(),
                status: run.status.clone(),
                issue_count: run.issues.len(),
                unmatched: report.unmatched.len(),
                truncated_batches: run.truncation_flags().filter(|t| *t).count(),
                duplicates: duplicate_stats(run),
                coverage: coverage(report, master).ok(),
                severity_zero_hits: severity_zero_hits(report, master).unwrap_or(0),
                per_heuristic: per_heuristic(report, master).unwrap_or_default(),
                per_severity: per_severity(&[(report, master)]).unwrap_or_default(),
                per_task: per_task_trend(report, master).ok(),
            }
        })
        .collect();

    let mut unions = Vec::new();
    for kind in [EvaluatorKind::Human, EvaluatorKind::Synthetic] {
        let members: Vec<&RunAnalysis> = runs
            .iter()
            .filter(|r| r.evaluator.kind == kind && r.status == RunStatus::Complete)
            .collect();
        if members.is_empty() {
            continue;
        }
        let member_reports: Vec<&MatchReport> = members.iter().map(|r| &reports[&r.run_id]).collect();
        let union = aggregate_union(&member_reports).unwrap_or_default();
        let individual: Vec<CoverageStats> = members.iter().filter_map(|r| r.coverage).collect();
        unions.push(UnionAnalysis {
            kind,
            run_ids: members.iter().map(|r| r.run_id.clone()).collect(),
            coverage: coverage(&union, master).ok(),
            severity_zero_hits: severity_zero_hits(&union, master).unwrap_or(0),
            per_heuristic: per_heuristic(&union, master).unwrap_or_default(),
            per_severity: per_severity(&[(&union, master)]).unwrap_or_default(),
            per_task: per_task_trend(&union, master).ok(),
            mean_individual: mean_individual_coverage(&individual).ok(),
        });
    }

    let mut by_provider: BTreeMap<&str, Vec<RunRatio>> = BTreeMap::new();
    for r in runs.iter().filter(|r| r.evaluator.kind == EvaluatorKind::Synthetic) {
        if let (Some(c), RunStatus::Complete) = (r.coverage, &r.status) {
            by_provider.entry(&r.evaluator.label).or_default().push(RunRatio {
                run_id: r.run_id.clone(),
                ratio: c.ratio,
                matched: c.matched,
                denominator: c.denominator,
            });
        }
    }
    let providers = by_provider
        .into_iter()
        .map(|(provider, per_run)| {
            let ratios: Vec<f64> = per_run.iter().map(|r| r.ratio).collect();
            let (mean, sd) = mean_and_sample_sd(&ratios);
            ProviderSummary {
                provider: provider.into(),
                series: ConsistencySeries {
                    kind: ConsistencyKind::PerformanceConsistency,
                    per_run,
                    mean,
                    sd,
                },
            }
        })
        .collect();

    let nonzero = master.entries.iter().filter(|e| e.coded_severity.is_problem()).count();
    AnalysisSnapshot {
        app_id: state.app_id.clone(),
        name: state.name.clone(),
        master_version: state.master_version,
        master_entries: master.len(),
        nonzero_entries: nonzero,
        severity_zero_entries: master.len() - nonzero,
        across_screen_entries: master.entries.iter().filter(|e| e.across_screen).count(),
        runs,
        unions,
        providers,
        open_triage: OpenTriage {
            proposals: state
                .proposals()
                .filter(|p| p.status == ProposalStatus::Proposed)
                .count(),
            link_candidates: state
                .link_candidates
                .iter()
                .filter(|c| {
                    c.status == MatchStatus::NeedsReview
                        && state.issue(&c.issue_id).is_some_and(|i| state.master_link(i).is_none())
                })
                .count(),
        },
    }
}
