//! Consistency of repeated synthetic runs, against the first run's findings
//! (coverage-consistency) and against the master set
//! (performance-consistency).

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::coverage::{coverage, MatchReport};
use crate::error::{Error, Result};
use crate::model::{IssueId, MasterSet, RunId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConsistencyKind {
    CoverageConsistency,
    PerformanceConsistency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRatio {
    pub run_id: RunId,
    pub ratio: f64,
    pub matched: usize,
    pub denominator: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencySeries {
    pub kind: ConsistencyKind,
    pub per_run: Vec<RunRatio>,
    pub mean: f64,
    /// Sample standard deviation (n - 1); zero for a single run.
    pub sd: f64,
}

impl ConsistencySeries {
    pub fn from_runs(kind: ConsistencyKind, per_run: Vec<RunRatio>) -> Result<Self> {
        if let Some(bad) = per_run.iter().find(|r| !(0.0..=1.0).contains(&r.ratio)) {
            return Err(Error::Parameter(alloc::format!(
                "ratio {} of run {} outside [0, 1]",
                bad.ratio,
                bad.run_id
            )));
        }
        let ratios: Vec<f64> = per_run.iter().map(|r| r.ratio).collect();
        let (mean, sd) = mean_and_sample_sd(&ratios);
        Ok(Self {
            kind,
            per_run,
            mean,
            sd,
        })
    }

    /// Appends a run and recomputes the aggregates; earlier entries are
    /// untouched.
    pub fn push(&mut self, run: RunRatio) -> Result<()> {
        let mut runs = self.per_run.clone();
        runs.push(run);
        *self = Self::from_runs(self.kind, runs)?;
        Ok(())
    }
}

/// Mean and sample standard deviation; `(NaN, 0)` for an empty slice.
pub fn mean_and_sample_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, libm::sqrt(ss / (n - 1) as f64))
}

/// Share of the baseline's deduplicated issues that each later run
/// re-found. The baseline itself is the first entry, at 1.0.
///
/// `refound` pairs each later run with the baseline issue ids it was
/// confirmed to contain; ids outside the baseline are ignored.
pub fn coverage_consistency(
    baseline_run: &RunId,
    baseline_issues: &[IssueId],
    refound: &[(RunId, Vec<IssueId>)],
) -> Result<ConsistencySeries> {
    let baseline: BTreeSet<&IssueId> = baseline_issues.iter().collect();
    if baseline.is_empty() {
        return Err(Error::EmptyBaseline);
    }
    let denominator = baseline.len();
    let mut per_run = Vec::with_capacity(refound.len() + 1);
    per_run.push(RunRatio {
        run_id: baseline_run.clone(),
        ratio: 1.0,
        matched: denominator,
        denominator,
    });
    for (run_id, ids) in refound {
        let hit: BTreeSet<&IssueId> = ids.iter().filter(|i| baseline.contains(i)).collect();
        per_run.push(RunRatio {
            run_id: run_id.clone(),
            ratio: hit.len() as f64 / denominator as f64,
            matched: hit.len(),
            denominator,
        });
    }
    ConsistencySeries::from_runs(ConsistencyKind::CoverageConsistency, per_run)
}

/// Master-set coverage of each run.
pub fn performance_consistency(
    reports: &[(RunId, &MatchReport)],
    master: &MasterSet,
) -> Result<ConsistencySeries> {
    let per_run = reports
        .iter()
        .map(|(run_id, report)| {
            let c = coverage(report, master)?;
            Ok(RunRatio {
                run_id: run_id.clone(),
                ratio: c.ratio,
                matched: c.matched,
                denominator: c.denominator,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ConsistencySeries::from_runs(ConsistencyKind::PerformanceConsistency, per_run)
}
