//! Coverage of a master set by one evaluator or a union of evaluators.
//!
//! Entries coded severity 0 are not usability problems and are left out of
//! every denominator except the dedicated severity-0 row of
//! [`per_severity`].

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heuristic::{HeuristicId, Severity};
use crate::model::{EvaluationRun, IssueId, MasterEntry, MasterId, MasterSet, UsabilityIssue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "scope", content = "key", rename_all = "snake_case")]
pub enum CoverageScope {
    AllNonZeroSeverity,
    PerHeuristic(HeuristicId),
    PerSeverity(Severity),
    PerTask(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageStats {
    pub matched: usize,
    pub denominator: usize,
    pub ratio: f64,
    pub scope: CoverageScope,
}

impl CoverageStats {
    pub fn new(matched: usize, denominator: usize, scope: CoverageScope) -> Result<Self> {
        if denominator == 0 {
            return Err(Error::EmptyDenominator);
        }
        if matched > denominator {
            return Err(Error::Parameter(format!(
                "matched {matched} exceeds denominator {denominator}"
            )));
        }
        Ok(Self {
            matched,
            denominator,
            ratio: matched as f64 / denominator as f64,
            scope,
        })
    }

    pub fn percent(&self) -> u32 {
        percent_round_half_up(self.matched, self.denominator)
    }

    /// `"73% (97/133)"`.
    pub fn cell(&self) -> String {
        format_cell(self.matched, self.denominator)
    }
}

/// Integer percent, rounding halves up. Exact: no floating point involved.
pub fn percent_round_half_up(matched: usize, denominator: usize) -> u32 {
    assert!(denominator > 0, "percent of an empty denominator");
    ((200 * matched as u128 + denominator as u128) / (2 * denominator as u128)) as u32
}

pub fn format_cell(matched: usize, denominator: usize) -> String {
    format!(
        "{}% ({matched}/{denominator})",
        percent_round_half_up(matched, denominator)
    )
}

/// Confirmed links from one run (or a union of runs) to master entries.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchReport {
    pub report_id: String,
    pub links: BTreeMap<IssueId, MasterId>,
    pub unmatched: Vec<IssueId>,
    pub duplicate_count: usize,
}

impl MatchReport {
    /// Distinct master entries hit; many links to one entry count once.
    pub fn master_ids(&self) -> BTreeSet<&MasterId> {
        self.links.values().collect()
    }
}

fn linked_entries<'m>(report: &MatchReport, master: &'m MasterSet) -> Result<Vec<&'m MasterEntry>> {
    let index: BTreeMap<&MasterId, &MasterEntry> =
        master.entries.iter().map(|e| (&e.master_id, e)).collect();
    report
        .master_ids()
        .into_iter()
        .map(|id| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::UnknownMasterEntry(id.to_string()))
        })
        .collect()
}

fn stats_where(
    report: &MatchReport,
    master: &MasterSet,
    scope: CoverageScope,
    keep: impl Fn(&MasterEntry) -> bool,
) -> Result<CoverageStats> {
    let denominator = master.entries.iter().filter(|e| keep(e)).count();
    let matched = linked_entries(report, master)?
        .into_iter()
        .filter(|e| keep(e))
        .count();
    CoverageStats::new(matched, denominator, scope)
}

/// Share of non-zero-severity master entries the report hits.
pub fn coverage(report: &MatchReport, master: &MasterSet) -> Result<CoverageStats> {
    stats_where(report, master, CoverageScope::AllNonZeroSeverity, |e| {
        e.coded_severity.is_problem()
    })
}

/// Linked entries coded severity 0, reported beside the coverage ratio.
pub fn severity_zero_hits(report: &MatchReport, master: &MasterSet) -> Result<usize> {
    Ok(linked_entries(report, master)?
        .into_iter()
        .filter(|e| !e.coded_severity.is_problem())
        .count())
}

/// One row per heuristic that has non-zero-severity entries.
pub fn per_heuristic(report: &MatchReport, master: &MasterSet) -> Result<Vec<CoverageStats>> {
    coverage(report, master)?;
    let mut rows = Vec::new();
    for h in HeuristicId::all() {
        let keep = |e: &MasterEntry| e.heuristic_id == h && e.coded_severity.is_problem();
        if master.entries.iter().any(keep) {
            rows.push(stats_where(report, master, CoverageScope::PerHeuristic(h), keep)?);
        }
    }
    Ok(rows)
}

/// One row per severity level present across all the given apps, severity
/// 0 included.
pub fn per_severity(pairs: &[(&MatchReport, &MasterSet)]) -> Result<Vec<CoverageStats>> {
    let mut rows = Vec::new();
    for sev in Severity::all() {
        let mut matched = 0;
        let mut denominator = 0;
        for (report, master) in pairs {
            let keep = |e: &MasterEntry| e.coded_severity == sev;
            denominator += master.entries.iter().filter(|e| keep(e)).count();
            matched += linked_entries(report, master)?.iter().filter(|e| keep(e)).count();
        }
        if denominator > 0 {
            rows.push(CoverageStats::new(
                matched,
                denominator,
                CoverageScope::PerSeverity(sev),
            )?);
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyDenominator);
    }
    Ok(rows)
}

/// Union of several evaluators' links against the same master set.
pub fn aggregate_union(reports: &[&MatchReport]) -> Result<MatchReport> {
    if reports.is_empty() {
        return Err(Error::NoReports);
    }
    let mut links = BTreeMap::new();
    let mut unmatched = BTreeSet::new();
    for r in reports {
        links.extend(r.links.iter().map(|(k, v)| (k.clone(), v.clone())));
        unmatched.extend(r.unmatched.iter().cloned());
    }
    let ids: Vec<&str> = reports.iter().map(|r| r.report_id.as_str()).collect();
    Ok(MatchReport {
        report_id: format!("union({})", ids.join(",")),
        links,
        unmatched: unmatched.into_iter().collect(),
        duplicate_count: reports.iter().map(|r| r.duplicate_count).sum(),
    })
}

/// Arithmetic mean of individual coverage ratios.
pub fn mean_individual_coverage(stats: &[CoverageStats]) -> Result<f64> {
    if stats.is_empty() {
        return Err(Error::NoReports);
    }
    Ok(stats.iter().map(|s| s.ratio).sum::<f64>() / stats.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTrend {
    pub per_task: Vec<CoverageStats>,
    /// Least-squares slope of coverage ratio against task index.
    pub slope: f64,
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::TrendUndefined(points.len()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::TrendUndefined(1));
    }
    Ok(sxy / sxx)
}

/// Per-task coverage (tasks taken from master entries) and its linear trend.
pub fn per_task_trend(report: &MatchReport, master: &MasterSet) -> Result<TaskTrend> {
    let tasks: BTreeSet<u32> = master
        .entries
        .iter()
        .filter(|e| e.coded_severity.is_problem())
        .map(|e| e.task_index)
        .collect();
    if tasks.len() < 2 {
        return Err(Error::TrendUndefined(tasks.len()));
    }
    let per_task = tasks
        .iter()
        .map(|&t| {
            stats_where(report, master, CoverageScope::PerTask(t), |e| {
                e.task_index == t && e.coded_severity.is_problem()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<(f64, f64)> = per_task
        .iter()
        .filter_map(|s| match s.scope {
            CoverageScope::PerTask(t) => Some((f64::from(t), s.ratio)),
            _ => None,
        })
        .collect();
    Ok(TaskTrend {
        slope: ols_slope(&points)?,
        per_task,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateStats {
    /// Confirmed within-run duplicates: a group of k reports adds k - 1.
    pub duplicate_count: usize,
    /// Duplicates whose screens differ from their canonical's, i.e. the same
    /// problem reported again on another screen.
    pub by_screen_repetition: usize,
}

pub fn duplicate_stats(run: &EvaluationRun) -> DuplicateStats {
    let by_id: BTreeMap<&IssueId, &UsabilityIssue> =
        run.issues.iter().map(|i| (&i.issue_id, i)).collect();
    let mut stats = DuplicateStats::default();
    for issue in &run.issues {
        let Some(canonical) = issue.duplicate_of.as_ref().and_then(|c| by_id.get(c)) else {
            continue;
        };
        stats.duplicate_count += 1;
        if canonical.screen_refs != issue.screen_refs {
            stats.by_screen_repetition += 1;
        }
    }
    stats
}

/// Links a run's issues to master entries through contributions. A
/// confirmed duplicate inherits its canonical issue's entry.
pub fn build_match_report(run: &EvaluationRun, master: &MasterSet) -> MatchReport {
    let contributions = master.contributions();
    let mut links = BTreeMap::new();
    let mut unmatched = Vec::new();
    for issue in &run.issues {
        let direct = contributions.get(&issue.issue_id);
        let inherited = issue
            .duplicate_of
            .as_ref()
            .and_then(|c| contributions.get(c));
        match direct.or(inherited) {
            Some(m) => {
                links.insert(issue.issue_id.clone(), (*m).clone());
            }
            None if issue.duplicate_of.is_none() => unmatched.push(issue.issue_id.clone()),
            None => {}
        }
    }
    MatchReport {
        report_id: run.run_id.to_string(),
        links,
        unmatched,
        duplicate_count: duplicate_stats(run).duplicate_count,
    }
}
