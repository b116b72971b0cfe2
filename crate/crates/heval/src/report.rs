//! Reports in Markdown, HTML, JSON and CSV, with SVG charts.
//!
//! A report is first assembled as a list of [`Block`]s and then written out
//! in the requested format, so every format carries the same numbers.
//! Nothing time-dependent goes into the document: rendering one project
//! state twice gives identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use heval_core::analysis::analyze;
use heval_core::coverage::{
    aggregate_union, build_match_report, coverage, format_cell, per_heuristic, per_severity,
    per_task_trend, percent_round_half_up, severity_zero_hits, CoverageScope, CoverageStats,
    MatchReport,
};
use heval_core::dedup::ProposalStatus;
use heval_core::model::{EvaluatorKind, RunId};
use heval_core::triage::ProjectState;
use heval_core::{HeuristicId, Severity};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{io_at, HevalError, Result};
use crate::reliability::{summarize_reliability, ProviderReliability};
use crate::store::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Overview,
    PerHeuristic,
    PerSeverity,
    PerTask,
    Reliability,
    ProviderComparison,
    OpenTriage,
}

impl Section {
    pub const ALL: [Section; 7] = [
        Section::Overview,
        Section::PerHeuristic,
        Section::PerSeverity,
        Section::PerTask,
        Section::Reliability,
        Section::ProviderComparison,
        Section::OpenTriage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Section::Overview => "overview",
            Section::PerHeuristic => "per-heuristic",
            Section::PerSeverity => "per-severity",
            Section::PerTask => "per-task",
            Section::Reliability => "reliability",
            Section::ProviderComparison => "provider-comparison",
            Section::OpenTriage => "open-triage",
        }
    }
}

impl FromStr for Section {
    type Err = HevalError;

    fn from_str(s: &str) -> Result<Self> {
        Section::ALL
            .into_iter()
            .find(|sec| sec.name() == s || sec.name().replace('-', "_") == s)
            .ok_or_else(|| HevalError::Invalid(format!("unknown report section {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Markdown,
    Html,
    Json,
    Csv,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Markdown => "md",
            Format::Html => "html",
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

impl FromStr for Format {
    type Err = HevalError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "md" | "markdown" => Ok(Format::Markdown),
            "html" => Ok(Format::Html),
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(HevalError::Invalid(format!("unknown report format {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportSpec {
    pub sections: Vec<Section>,
    pub format: Format,
    pub include_severity0: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Stats { matched: usize, denominator: usize },
    Count(usize),
    Decimal(f64),
}

impl Cell {
    fn of(s: &CoverageStats) -> Self {
        Cell::Stats {
            matched: s.matched,
            denominator: s.denominator,
        }
    }

    pub fn text(&self) -> String {
        match *self {
            Cell::Stats {
                matched,
                denominator,
            } => format_cell(matched, denominator),
            Cell::Count(n) => n.to_string(),
            Cell::Decimal(v) => format!("{v:.4}"),
        }
    }

    fn json(&self) -> Value {
        match *self {
            Cell::Stats {
                matched,
                denominator,
            } => json!({
                "matched": matched,
                "denominator": denominator,
                "percent": percent_round_half_up(matched, denominator),
                "cell": format_cell(matched, denominator),
            }),
            Cell::Count(n) => json!(n),
            Cell::Decimal(v) => json!(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub key: String,
    pub label: String,
    pub cells: Vec<Option<Cell>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub id: String,
    pub row_header: String,
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChartKind {
    Bar,
    Line,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub id: String,
    pub title: String,
    pub kind: ChartKind,
    pub categories: Vec<String>,
    pub series: Vec<Series>,
}

/// Series name and one `(matched, denominator)` per category.
pub type Series = (String, Vec<Option<(usize, usize)>>);

#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Heading(String),
    Text(String),
    Table(Table),
    Chart(Chart),
}

/// A report column: one evaluator or a union of evaluators.
#[derive(Debug, Clone)]
pub struct Column {
    pub label: String,
    pub kind: EvaluatorKind,
    pub runs: Vec<RunId>,
    pub report: MatchReport,
}

/// Synthetic providers (each the union of its complete runs) in name
/// order, then the union of human evaluators.
pub fn columns(state: &ProjectState) -> Vec<Column> {
    let mut groups: BTreeMap<(u8, String), Vec<&heval_core::model::EvaluationRun>> = BTreeMap::new();
    for run in state.runs.iter().filter(|r| r.is_complete()) {
        let key = match run.evaluator.kind {
            EvaluatorKind::Synthetic => (0, run.evaluator.label.clone()),
            EvaluatorKind::Human => (1, String::new()),
        };
        groups.entry(key).or_default().push(run);
    }
    groups
        .into_iter()
        .map(|((rank, provider), runs)| {
            let reports: Vec<MatchReport> = runs.iter().map(|r| build_match_report(r, &state.master)).collect();
            let refs: Vec<&MatchReport> = reports.iter().collect();
            let n = runs.len();
            let (label, kind) = if rank == 0 {
                let label = if n == 1 {
                    format!("{provider} (synthetic)")
                } else {
                    format!("{provider} (synthetic, union of {n} runs)")
                };
                (label, EvaluatorKind::Synthetic)
            } else if n == 1 {
                (format!("{} (human)", runs[0].evaluator.label), EvaluatorKind::Human)
            } else {
                (format!("{n} human evaluators (union)"), EvaluatorKind::Human)
            };
            Column {
                label,
                kind,
                runs: runs.iter().map(|r| r.run_id.clone()).collect(),
                report: aggregate_union(&refs).expect("at least one run"),
            }
        })
        .collect()
}

fn unavailable(section: Section, missing: &str) -> HevalError {
    HevalError::SectionUnavailable {
        section: section.name().into(),
        missing: missing.into(),
    }
}

fn severity_label(s: Severity) -> String {
    format!("{} ({})", s.rating(), s.label())
}

/// Everything a report reads, computed once.
pub struct ReportData<'a> {
    pub state: &'a ProjectState,
    pub columns: Vec<Column>,
    pub reliability: Vec<ProviderReliability>,
    pub auto_accept: f64,
}

impl<'a> ReportData<'a> {
    pub fn new(state: &'a ProjectState, auto_accept: f64) -> Self {
        Self {
            state,
            columns: columns(state),
            reliability: summarize_reliability(state, auto_accept),
            auto_accept,
        }
    }

    fn require_coverage(&self, section: Section) -> Result<()> {
        if !self.state.master.entries.iter().any(|e| e.coded_severity.is_problem()) {
            return Err(unavailable(section, "a master set with non-zero-severity entries"));
        }
        if self.columns.is_empty() {
            return Err(unavailable(section, "at least one complete evaluation run"));
        }
        Ok(())
    }

    fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.label.clone()).collect()
    }

    fn overview(&self, out: &mut Vec<Block>) -> Result<()> {
        self.require_coverage(Section::Overview)?;
        let snap = analyze(self.state);
        out.push(Block::Heading("Overview".into()));
        out.push(Block::Text(format!(
            "Master set: {} entries, {} with non-zero severity, {} coded severity 0, {} across-screen. Coverage counts non-zero-severity entries only.",
            snap.master_entries, snap.nonzero_entries, snap.severity_zero_entries, snap.across_screen_entries
        )));
        let master = &self.state.master;
        let mut rows = Vec::new();
        for c in &self.columns {
            let dup: usize = c.report.duplicate_count;
            rows.push(Row {
                key: format!("column:{}", c.label),
                label: c.label.clone(),
                cells: vec![
                    coverage(&c.report, master).ok().map(|s| Cell::of(&s)),
                    severity_zero_hits(&c.report, master).ok().map(Cell::Count),
                    Some(Cell::Count(c.report.unmatched.len())),
                    Some(Cell::Count(dup)),
                ],
            });
        }
        for run in snap.runs.iter().filter(|r| r.status == heval_core::model::RunStatus::Complete) {
            rows.push(Row {
                key: format!("run:{}", run.run_id),
                label: format!("run {}", run.run_id),
                cells: vec![
                    run.coverage.as_ref().map(Cell::of),
                    Some(Cell::Count(run.severity_zero_hits)),
                    Some(Cell::Count(run.unmatched)),
                    Some(Cell::Count(run.duplicates.duplicate_count)),
                ],
            });
        }
        out.push(Block::Table(Table {
            id: "overview".into(),
            row_header: "Evaluator".into(),
            columns: vec![
                "Coverage".into(),
                "Severity-0 entries hit".into(),
                "Unmatched issues".into(),
                "Confirmed duplicates".into(),
            ],
            rows,
            notes: Vec::new(),
        }));
        if let Some(mean) = snap.union(EvaluatorKind::Human).and_then(|u| u.mean_individual) {
            let n = snap.union(EvaluatorKind::Human).map(|u| u.run_ids.len()).unwrap_or(0);
            out.push(Block::Text(format!(
                "Mean individual human coverage ratio: {mean:.4} over {n} evaluators."
            )));
        }
        out.push(Block::Chart(Chart {
            id: "coverage".into(),
            title: "Coverage of the master set".into(),
            kind: ChartKind::Bar,
            categories: vec!["All non-zero severity".into()],
            series: self
                .columns
                .iter()
                .map(|c| {
                    let s = coverage(&c.report, master).ok().map(|s| (s.matched, s.denominator));
                    (c.label.clone(), vec![s])
                })
                .collect(),
        }));
        Ok(())
    }

    fn per_heuristic(&self, out: &mut Vec<Block>) -> Result<()> {
        self.require_coverage(Section::PerHeuristic)?;
        let master = &self.state.master;
        let per_col: Vec<BTreeMap<HeuristicId, CoverageStats>> = self
            .columns
            .iter()
            .map(|c| {
                per_heuristic(&c.report, master)
                    .unwrap_or_default()
                    .into_iter()
                    .filter_map(|s| match s.scope {
                        CoverageScope::PerHeuristic(h) => Some((h, s)),
                        _ => None,
                    })
                    .collect()
            })
            .collect();
        let present: Vec<HeuristicId> = HeuristicId::all()
            .filter(|h| per_col.iter().any(|m| m.contains_key(h)))
            .collect();
        let omitted: Vec<String> = HeuristicId::all()
            .filter(|h| !present.contains(h))
            .map(|h| h.get().to_string())
            .collect();
        let rows: Vec<Row> = present
            .iter()
            .map(|h| Row {
                key: format!("heuristic:{}", h.get()),
                label: format!("{}. {}", h.get(), h.name()),
                cells: per_col.iter().map(|m| m.get(h).map(Cell::of)).collect(),
            })
            .collect();
        let mut notes = vec!["Severity-0 entries are excluded from every row.".to_string()];
        if !omitted.is_empty() {
            notes.push(format!(
                "Heuristics without non-zero-severity master entries omitted: {}.",
                omitted.join(", ")
            ));
        }
        out.push(Block::Heading("Coverage by heuristic".into()));
        out.push(Block::Table(Table {
            id: "per_heuristic".into(),
            row_header: "Heuristic".into(),
            columns: self.column_names(),
            rows,
            notes,
        }));
        out.push(Block::Chart(Chart {
            id: "per_heuristic".into(),
            title: "Coverage by heuristic".into(),
            kind: ChartKind::Bar,
            categories: present.iter().map(|h| h.get().to_string()).collect(),
            series: self
                .columns
                .iter()
                .zip(&per_col)
                .map(|(c, m)| {
                    let values = present
                        .iter()
                        .map(|h| m.get(h).map(|s| (s.matched, s.denominator)))
                        .collect();
                    (c.label.clone(), values)
                })
                .collect(),
        }));
        Ok(())
    }

    fn per_severity(&self, out: &mut Vec<Block>, include_zero: bool) -> Result<()> {
        self.require_coverage(Section::PerSeverity)?;
        let master = &self.state.master;
        let per_col: Vec<BTreeMap<Severity, CoverageStats>> = self
            .columns
            .iter()
            .map(|c| {
                per_severity(&[(&c.report, master)])
                    .unwrap_or_default()
                    .into_iter()
                    .filter_map(|s| match s.scope {
                        CoverageScope::PerSeverity(sev) => Some((sev, s)),
                        _ => None,
                    })
                    .collect()
            })
            .collect();
        let levels: Vec<Severity> = Severity::all()
            .filter(|s| include_zero || s.is_problem())
            .filter(|s| per_col.iter().any(|m| m.contains_key(s)))
            .collect();
        let rows = levels
            .iter()
            .map(|s| Row {
                key: format!("severity:{}", s.rating()),
                label: severity_label(*s),
                cells: per_col.iter().map(|m| m.get(s).map(Cell::of)).collect(),
            })
            .collect();
        let mut notes = Vec::new();
        if include_zero {
            notes.push("The severity-0 row is shown for reference; those entries count toward no other denominator.".into());
        }
        out.push(Block::Heading("Coverage by severity".into()));
        out.push(Block::Table(Table {
            id: "per_severity".into(),
            row_header: "Severity".into(),
            columns: self.column_names(),
            rows,
            notes,
        }));
        Ok(())
    }

    fn per_task(&self, out: &mut Vec<Block>) -> Result<()> {
        self.require_coverage(Section::PerTask)?;
        let master = &self.state.master;
        let trends: Vec<_> = self
            .columns
            .iter()
            .map(|c| per_task_trend(&c.report, master).ok())
            .collect();
        let Some(first) = trends.iter().flatten().next() else {
            return Err(unavailable(
                Section::PerTask,
                "non-zero-severity master entries on at least two tasks",
            ));
        };
        let tasks: Vec<u32> = first
            .per_task
            .iter()
            .filter_map(|s| match s.scope {
                CoverageScope::PerTask(t) => Some(t),
                _ => None,
            })
            .collect();
        let cell_for = |trend: &Option<heval_core::coverage::TaskTrend>, t: u32| {
            trend.as_ref().and_then(|tr| {
                tr.per_task
                    .iter()
                    .find(|s| s.scope == CoverageScope::PerTask(t))
                    .copied()
            })
        };
        let mut rows: Vec<Row> = tasks
            .iter()
            .map(|&t| Row {
                key: format!("task:{t}"),
                label: format!("Task {t}"),
                cells: trends.iter().map(|tr| cell_for(tr, t).map(|s| Cell::of(&s))).collect(),
            })
            .collect();
        rows.push(Row {
            key: "slope".into(),
            label: "Trend (least-squares slope per task)".into(),
            cells: trends
                .iter()
                .map(|tr| tr.as_ref().map(|t| Cell::Decimal(t.slope)))
                .collect(),
        });
        out.push(Block::Heading("Coverage by task".into()));
        out.push(Block::Table(Table {
            id: "per_task".into(),
            row_header: "Task".into(),
            columns: self.column_names(),
            rows,
            notes: Vec::new(),
        }));
        out.push(Block::Chart(Chart {
            id: "per_task".into(),
            title: "Coverage by task".into(),
            kind: ChartKind::Line,
            categories: tasks.iter().map(|t| t.to_string()).collect(),
            series: self
                .columns
                .iter()
                .zip(&trends)
                .map(|(c, tr)| {
                    let values = tasks
                        .iter()
                        .map(|&t| cell_for(tr, t).map(|s| (s.matched, s.denominator)))
                        .collect();
                    (c.label.clone(), values)
                })
                .collect(),
        }));
        Ok(())
    }

    fn reliability(&self, out: &mut Vec<Block>) -> Result<()> {
        let usable: Vec<&ProviderReliability> = self
            .reliability
            .iter()
            .filter(|p| p.coverage_consistency.is_some() || p.performance_consistency.is_some())
            .collect();
        if usable.is_empty() {
            return Err(unavailable(
                Section::Reliability,
                "a complete synthetic run with issues, or a master set with non-zero-severity entries",
            ));
        }
        out.push(Block::Heading("Reliability".into()));
        out.push(Block::Text(format!(
            "Coverage-consistency compares each run with the provider's earliest run; an earlier issue counts as found again at similarity {:.2} or above, or through a shared master entry. Performance-consistency is coverage of the master set. SD is the sample standard deviation (n - 1).",
            self.auto_accept
        )));
        for p in usable {
            let mut run_ids: Vec<&RunId> = Vec::new();
            for s in [&p.coverage_consistency, &p.performance_consistency].into_iter().flatten() {
                for r in &s.per_run {
                    if !run_ids.contains(&&r.run_id) {
                        run_ids.push(&r.run_id);
                    }
                }
            }
            let find = |s: &Option<heval_core::reliability::ConsistencySeries>, id: &RunId| {
                s.as_ref()
                    .and_then(|s| s.per_run.iter().find(|r| &r.run_id == id))
                    .map(|r| Cell::Stats {
                        matched: r.matched,
                        denominator: r.denominator,
                    })
            };
            let mut rows: Vec<Row> = run_ids
                .iter()
                .map(|id| Row {
                    key: format!("run:{id}"),
                    label: if **id == p.baseline_run {
                        format!("{id} (baseline)")
                    } else {
                        id.to_string()
                    },
                    cells: vec![find(&p.coverage_consistency, id), find(&p.performance_consistency, id)],
                })
                .collect();
            let agg = |f: fn(&heval_core::reliability::ConsistencySeries) -> f64| {
                vec![
                    p.coverage_consistency.as_ref().map(|s| Cell::Decimal(f(s))),
                    p.performance_consistency.as_ref().map(|s| Cell::Decimal(f(s))),
                ]
            };
            rows.push(Row {
                key: "mean".into(),
                label: "Mean ratio".into(),
                cells: agg(|s| s.mean),
            });
            rows.push(Row {
                key: "sd".into(),
                label: "SD (n - 1)".into(),
                cells: agg(|s| s.sd),
            });
            out.push(Block::Heading(format!("Reliability: {}", p.provider)));
            out.push(Block::Table(Table {
                id: format!("reliability:{}", p.provider),
                row_header: "Run".into(),
                columns: vec!["Coverage-consistency".into(), "Performance-consistency".into()],
                rows,
                notes: Vec::new(),
            }));
        }
        Ok(())
    }

    fn provider_comparison(&self, out: &mut Vec<Block>) -> Result<()> {
        let snap = analyze(self.state);
        if snap.providers.is_empty() {
            return Err(unavailable(
                Section::ProviderComparison,
                "complete synthetic runs and a master set with non-zero-severity entries",
            ));
        }
        let rows = snap
            .providers
            .iter()
            .map(|p| {
                let stat = |r: &heval_core::reliability::RunRatio| Cell::Stats {
                    matched: r.matched,
                    denominator: r.denominator,
                };
                let by_ratio = |a: &&heval_core::reliability::RunRatio, b: &&heval_core::reliability::RunRatio| {
                    (a.matched * b.denominator).cmp(&(b.matched * a.denominator))
                };
                Row {
                    key: format!("provider:{}", p.provider),
                    label: p.provider.clone(),
                    cells: vec![
                        Some(Cell::Count(p.series.per_run.len())),
                        Some(Cell::Decimal(p.series.mean)),
                        Some(Cell::Decimal(p.series.sd)),
                        p.series.per_run.iter().min_by(by_ratio).map(stat),
                        p.series.per_run.iter().max_by(by_ratio).map(stat),
                    ],
                }
            })
            .collect();
        out.push(Block::Heading("Provider comparison".into()));
        out.push(Block::Table(Table {
            id: "provider_comparison".into(),
            row_header: "Provider".into(),
            columns: vec![
                "Complete runs".into(),
                "Mean coverage ratio".into(),
                "SD (n - 1)".into(),
                "Lowest run".into(),
                "Highest run".into(),
            ],
            rows,
            notes: Vec::new(),
        }));
        Ok(())
    }

    fn open_triage(&self, out: &mut Vec<Block>) {
        let snap = analyze(self.state);
        out.push(Block::Heading("Open triage".into()));
        out.push(Block::Text(format!(
            "{} duplicate proposals and {} master-link candidates await review.",
            snap.open_triage.proposals, snap.open_triage.link_candidates
        )));
        let mut open: Vec<_> = self
            .state
            .proposals()
            .filter(|p| p.status == ProposalStatus::Proposed)
            .collect();
        open.sort_by(|a, b| {
            b.mean_pairwise_score
                .total_cmp(&a.mean_pairwise_score)
                .then_with(|| a.proposal_id.cmp(&b.proposal_id))
        });
        if !open.is_empty() {
            out.push(Block::Table(Table {
                id: "open_proposals".into(),
                row_header: "Proposal".into(),
                columns: vec!["Members".into(), "Mean pairwise score".into()],
                rows: open
                    .iter()
                    .map(|p| Row {
                        key: format!("proposal:{}", p.proposal_id),
                        label: p.proposal_id.to_string(),
                        cells: vec![Some(Cell::Count(p.group.len())), Some(Cell::Decimal(p.mean_pairwise_score))],
                    })
                    .collect(),
                notes: Vec::new(),
            }));
        }
    }

    /// The report's content for `spec`, independent of output format.
    pub fn blocks(&self, spec: &ReportSpec) -> Result<Vec<Block>> {
        if spec.sections.is_empty() {
            return Err(heval_core::Error::Parameter("a report needs at least one section".into()).into());
        }
        let mut out = vec![Block::Heading(format!("Heuristic evaluation report: {}", self.state.name))];
        out.push(Block::Text(format!(
            "Project {} at master version {}.",
            self.state.app_id, self.state.master_version
        )));
        for section in &spec.sections {
            match section {
                Section::Overview => self.overview(&mut out)?,
                Section::PerHeuristic => self.per_heuristic(&mut out)?,
                Section::PerSeverity => self.per_severity(&mut out, spec.include_severity0)?,
                Section::PerTask => self.per_task(&mut out)?,
                Section::Reliability => self.reliability(&mut out)?,
                Section::ProviderComparison => self.provider_comparison(&mut out)?,
                Section::OpenTriage => self.open_triage(&mut out),
            }
        }
        Ok(out)
    }
}

/// Rendered document plus the chart files a Markdown document links to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rendered {
    pub document: Vec<u8>,
    pub charts: Vec<(String, String)>,
}

pub fn render(data: &ReportData<'_>, spec: &ReportSpec) -> Result<Rendered> {
    let blocks = data.blocks(spec)?;
    Ok(match spec.format {
        Format::Markdown => markdown(&blocks),
        Format::Html => Rendered {
            document: html(&blocks).into_bytes(),
            charts: Vec::new(),
        },
        Format::Json => Rendered {
            document: json_document(&blocks),
            charts: Vec::new(),
        },
        Format::Csv => Rendered {
            document: long_csv(&blocks)?,
            charts: Vec::new(),
        },
    })
}

fn chart_file(chart: &Chart) -> String {
    format!("chart-{}.svg", chart.id.replace([':', '/'], "-"))
}

fn md_escape(s: &str) -> String {
    s.replace('|', "\\|")
}

fn markdown(blocks: &[Block]) -> Rendered {
    let mut out = String::new();
    let mut charts = Vec::new();
    let mut first = true;
    for block in blocks {
        match block {
            Block::Heading(h) => {
                let level = if first { "#" } else { "##" };
                first = false;
                let _ = writeln!(out, "{level} {h}\n");
            }
            Block::Text(t) => {
                let _ = writeln!(out, "{t}\n");
            }
            Block::Table(t) => {
                let _ = write!(out, "| {} |", md_escape(&t.row_header));
                for c in &t.columns {
                    let _ = write!(out, " {} |", md_escape(c));
                }
                out.push('\n');
                out.push_str("|---|");
                for _ in &t.columns {
                    out.push_str("---:|");
                }
                out.push('\n');
                for r in &t.rows {
                    let _ = write!(out, "| {} |", md_escape(&r.label));
                    for c in &r.cells {
                        let _ = write!(out, " {} |", c.map(|c| c.text()).unwrap_or_else(|| "n/a".into()));
                    }
                    out.push('\n');
                }
                for n in &t.notes {
                    let _ = write!(out, "\n_{n}_\n");
                }
                out.push('\n');
            }
            Block::Chart(c) => {
                let file = chart_file(c);
                let _ = writeln!(out, "![{}]({file})\n", c.title);
                charts.push((file, svg(c)));
            }
        }
    }
    Rendered {
        document: out.into_bytes(),
        charts,
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn html(blocks: &[Block]) -> String {
    let mut out = String::from(
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>Heuristic evaluation report</title>\n<style>\nbody{font-family:sans-serif;max-width:60rem;margin:2rem auto;padding:0 1rem}\ntable{border-collapse:collapse;margin:1rem 0}\nth,td{border:1px solid #bbb;padding:.25rem .5rem}\ntd.n{text-align:right;font-variant-numeric:tabular-nums}\n.note{font-style:italic;color:#555}\n</style>\n</head>\n<body>\n",
    );
    let mut first = true;
    for block in blocks {
        match block {
            Block::Heading(h) => {
                let tag = if first { "h1" } else { "h2" };
                first = false;
                let _ = writeln!(out, "<{tag}>{}</{tag}>", esc(h));
            }
            Block::Text(t) => {
                let _ = writeln!(out, "<p>{}</p>", esc(t));
            }
            Block::Table(t) => {
                let _ = writeln!(out, "<table data-table=\"{}\">", esc(&t.id));
                let _ = write!(out, "<tr><th>{}</th>", esc(&t.row_header));
                for c in &t.columns {
                    let _ = write!(out, "<th>{}</th>", esc(c));
                }
                out.push_str("</tr>\n");
                for r in &t.rows {
                    let _ = write!(out, "<tr data-row=\"{}\"><td>{}</td>", esc(&r.key), esc(&r.label));
                    for c in &r.cells {
                        let _ = write!(
                            out,
                            "<td class=\"n\">{}</td>",
                            esc(&c.map(|c| c.text()).unwrap_or_else(|| "n/a".into()))
                        );
                    }
                    out.push_str("</tr>\n");
                }
                out.push_str("</table>\n");
                for n in &t.notes {
                    let _ = writeln!(out, "<p class=\"note\">{}</p>", esc(n));
                }
            }
            Block::Chart(c) => {
                out.push_str(&svg(c));
                out.push('\n');
            }
        }
    }
    out.push_str("</body>\n</html>\n");
    out
}

fn json_document(blocks: &[Block]) -> Vec<u8> {
    let items: Vec<Value> = blocks
        .iter()
        .map(|b| match b {
            Block::Heading(h) => json!({"heading": h}),
            Block::Text(t) => json!({"text": t}),
            Block::Table(t) => json!({
                "table": t.id,
                "row_header": t.row_header,
                "columns": t.columns,
                "rows": t.rows.iter().map(|r| json!({
                    "key": r.key,
                    "label": r.label,
                    "cells": r.cells.iter().map(|c| c.map(|c| c.json()).unwrap_or(Value::Null)).collect::<Vec<_>>(),
                })).collect::<Vec<_>>(),
                "notes": t.notes,
            }),
            Block::Chart(c) => json!({
                "chart": c.id,
                "title": c.title,
                "kind": match c.kind { ChartKind::Bar => "bar", ChartKind::Line => "line" },
                "categories": c.categories,
                "series": c.series.iter().map(|(name, values)| json!({
                    "name": name,
                    "values": values.iter().map(|v| v.map(|(m, d)| json!({"matched": m, "denominator": d}))).collect::<Vec<_>>(),
                })).collect::<Vec<_>>(),
            }),
        })
        .collect();
    let mut out = serde_json::to_vec_pretty(&json!({ "report": items })).expect("report serializes");
    out.push(b'\n');
    out
}

fn csv_error(e: impl std::fmt::Display) -> HevalError {
    HevalError::Invalid(format!("csv: {e}"))
}

/// Every table in long form: one line per cell, plus a line per note.
pub const LONG_CSV_HEADER: [&str; 8] = [
    "table", "row", "label", "column", "matched", "denominator", "percent", "value",
];

fn long_csv(blocks: &[Block]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Always)
        .from_writer(Vec::new());
    w.write_record(LONG_CSV_HEADER).map_err(csv_error)?;
    for block in blocks {
        let Block::Table(t) = block else { continue };
        for r in &t.rows {
            for (col, cell) in t.columns.iter().zip(&r.cells) {
                let Some(cell) = cell else { continue };
                let (m, d, p, v) = match *cell {
                    Cell::Stats {
                        matched,
                        denominator,
                    } => (
                        matched.to_string(),
                        denominator.to_string(),
                        percent_round_half_up(matched, denominator).to_string(),
                        cell.text(),
                    ),
                    _ => (String::new(), String::new(), String::new(), cell.text()),
                };
                w.write_record([t.id.as_str(), &r.key, &r.label, col, &m, &d, &p, &v])
                    .map_err(csv_error)?;
            }
        }
        for n in &t.notes {
            w.write_record([t.id.as_str(), "note", "", "", "", "", "", n.as_str()])
                .map_err(csv_error)?;
        }
    }
    w.into_inner().map_err(csv_error)
}

/// One table in wide form: a header row, one row per table row with
/// `N% (k/n)` cells, and a trailing note row when the table has notes.
pub fn export_csv(data: &ReportData<'_>, table: Section, include_severity0: bool) -> Result<Vec<u8>> {
    let spec = ReportSpec {
        sections: vec![table],
        format: Format::Csv,
        include_severity0,
    };
    let blocks = data.blocks(&spec)?;
    let mut w = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Always)
        .from_writer(Vec::new());
    for block in &blocks {
        let Block::Table(t) = block else { continue };
        let mut header = vec![t.row_header.clone()];
        header.extend(t.columns.iter().cloned());
        w.write_record(&header).map_err(csv_error)?;
        for r in &t.rows {
            let mut rec = vec![r.label.clone()];
            rec.extend(r.cells.iter().map(|c| c.map(|c| c.text()).unwrap_or_default()));
            w.write_record(&rec).map_err(csv_error)?;
        }
        if !t.notes.is_empty() {
            let mut rec = vec![format!("Note: {}", t.notes.join(" "))];
            rec.extend(t.columns.iter().map(|_| String::new()));
            w.write_record(&rec).map_err(csv_error)?;
        }
        break;
    }
    w.into_inner().map_err(csv_error)
}

const PALETTE: [&str; 6] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#b07aa1"];

/// Self-contained SVG. Every bar or point carries its numbers as data
/// attributes, and the y axis has a tick every 10%.
pub fn svg(chart: &Chart) -> String {
    let (left, top, plot_h) = (50.0, 30.0, 200.0);
    let n_series = chart.series.len().max(1);
    let group_w = match chart.kind {
        ChartKind::Bar => (n_series as f64 * 18.0 + 12.0).max(40.0),
        ChartKind::Line => 60.0,
    };
    let plot_w = group_w * chart.categories.len().max(1) as f64;
    let legend_h = 16.0 * chart.series.len() as f64;
    let width = left + plot_w + 20.0;
    let height = top + plot_h + 40.0 + legend_h;
    let y = |ratio: f64| top + plot_h * (1.0 - ratio);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\" data-chart=\"{}\" data-kind=\"{}\">",
        esc(&chart.id),
        if chart.kind == ChartKind::Bar { "bar" } else { "line" }
    );
    let _ = writeln!(s, "<title>{}</title>", esc(&chart.title));
    for tick in (0..=100).step_by(10) {
        let ty = y(f64::from(tick) / 100.0);
        let _ = writeln!(
            s,
            "<line class=\"tick\" data-tick=\"{tick}\" x1=\"{left}\" x2=\"{:.1}\" y1=\"{ty:.1}\" y2=\"{ty:.1}\" stroke=\"#ddd\"/><text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"end\">{tick}%</text>",
            left + plot_w,
            left - 4.0,
            ty + 3.0
        );
    }
    for (ci, cat) in chart.categories.iter().enumerate() {
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
            left + group_w * (ci as f64 + 0.5),
            top + plot_h + 14.0,
            esc(cat)
        );
    }
    for (si, (name, values)) in chart.series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let mut points = Vec::new();
        for (ci, v) in values.iter().enumerate() {
            let Some((m, d)) = *v else { continue };
            let ratio = m as f64 / d as f64;
            let attrs = format!(
                "data-series=\"{}\" data-category=\"{}\" data-matched=\"{m}\" data-denominator=\"{d}\" data-percent=\"{}\"",
                esc(name),
                esc(&chart.categories[ci]),
                percent_round_half_up(m, d)
            );
            match chart.kind {
                ChartKind::Bar => {
                    let x = left + group_w * ci as f64 + 6.0 + 18.0 * si as f64;
                    let _ = writeln!(
                        s,
                        "<rect {attrs} x=\"{x:.1}\" y=\"{:.1}\" width=\"16\" height=\"{:.1}\" fill=\"{color}\"><title>{}: {}</title></rect>",
                        y(ratio),
                        plot_h * ratio,
                        esc(name),
                        format_cell(m, d)
                    );
                }
                ChartKind::Line => {
                    let x = left + group_w * (ci as f64 + 0.5);
                    points.push(format!("{x:.1},{:.1}", y(ratio)));
                    let _ = writeln!(
                        s,
                        "<circle {attrs} cx=\"{x:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{color}\"><title>{}: {}</title></circle>",
                        y(ratio),
                        esc(name),
                        format_cell(m, d)
                    );
                }
            }
        }
        if chart.kind == ChartKind::Line && points.len() > 1 {
            let _ = writeln!(
                s,
                "<polyline data-series=\"{}\" points=\"{}\" fill=\"none\" stroke=\"{color}\"/>",
                esc(name),
                points.join(" ")
            );
        }
        let ly = top + plot_h + 30.0 + 16.0 * si as f64;
        let _ = writeln!(
            s,
            "<rect x=\"{left}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{color}\"/><text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\">{}</text>",
            ly - 9.0,
            left + 14.0,
            ly,
            esc(name)
        );
    }
    s.push_str("</svg>");
    s
}

/// Writes the report to `reports/<timestamp>/` under `root` and returns
/// the document's path.
pub fn write_report(
    root: &Path,
    data: &ReportData<'_>,
    spec: &ReportSpec,
    at: DateTime<Utc>,
) -> Result<PathBuf> {
    let rendered = render(data, spec)?;
    let dir = root.join("reports").join(at.format("%Y%m%dT%H%M%SZ").to_string());
    std::fs::create_dir_all(&dir).map_err(io_at(&dir))?;
    let path = dir.join(format!("report.{}", spec.format.extension()));
    write_atomic(&path, &rendered.document)?;
    for (name, body) in &rendered.charts {
        write_atomic(&dir.join(name), body.as_bytes())?;
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in Section::ALL {
            assert_eq!(s.name().parse::<Section>().unwrap(), s);
        }
        assert!("bogus".parse::<Section>().is_err());
        assert_eq!("md".parse::<Format>().unwrap(), Format::Markdown);
    }

    #[test]
    fn svg_has_ticks_and_values() {
        let chart = Chart {
            id: "c".into(),
            title: "t".into(),
            kind: ChartKind::Bar,
            categories: vec!["a".into()],
            series: vec![("gpt-4".into(), vec![Some((97, 133))])],
        };
        let s = svg(&chart);
        assert_eq!(s.matches("data-tick=").count(), 11);
        assert!(s.contains("data-matched=\"97\" data-denominator=\"133\" data-percent=\"73\""));
    }
}
