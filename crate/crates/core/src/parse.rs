//! Turns raw completion text into issue records.
//!
//! Two formats are understood. The instructed one is a block of labeled
//! lines per issue (`Heuristic:`, `Issue:`, `Rationale:`, `Severity:`,
//! `Severity rationale:`, `Screens:`). Models that ignore the instruction
//! tend to write heuristic-header prose (`Visibility of system status: There
//! is no indication...`), which is accepted as a fallback.
//!
//! Every non-blank block either produces an issue or an `UnlabeledBlock`
//! warning. Lines that consist of nothing but a heuristic name act as section
//! headings for the blocks that follow and are not blocks themselves.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::heuristic::{heuristic_catalog, Batch, HeuristicId, Severity};
use crate::model::{CompletionResult, FinishReason, IssueId, IssueSource, UsabilityIssue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WarningKind {
    UnlabeledBlock,
    UnknownHeuristic,
    MissingSeverity,
    TruncatedTail,
    NoIssuesForHeuristic,
}

impl WarningKind {
    /// Warnings that stand in for a block which produced no issue.
    pub fn is_block_level(self) -> bool {
        matches!(self, WarningKind::UnlabeledBlock)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseWarning {
    pub kind: WarningKind,
    pub span: String,
}

/// An issue as read from text, before ids and provenance are attached.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedIssue {
    pub heuristic_id: Option<HeuristicId>,
    pub description: String,
    pub rationale: String,
    pub severity: Option<Severity>,
    pub severity_rationale: Option<String>,
    pub screen_refs: Vec<u32>,
    pub task_index: u32,
}

impl ParsedIssue {
    pub fn into_issue(self, issue_id: IssueId, source: IssueSource) -> UsabilityIssue {
        UsabilityIssue {
            issue_id,
            heuristic_id: self.heuristic_id,
            description: self.description,
            rationale: self.rationale,
            reported_severity: self.severity,
            severity_rationale: self.severity_rationale,
            screen_refs: self.screen_refs,
            task_index: self.task_index,
            source,
            duplicate_of: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub issues: Vec<ParsedIssue>,
    pub warnings: Vec<ParseWarning>,
    pub truncated: bool,
    /// Number of text blocks considered (headings excluded).
    pub block_count: usize,
}

impl ParseOutcome {
    pub fn block_warning_count(&self) -> usize {
        self.warnings.iter().filter(|w| w.kind.is_block_level()).count()
    }

    pub fn count(&self, kind: WarningKind) -> usize {
        self.warnings.iter().filter(|w| w.kind == kind).count()
    }
}

/// Task facts the parser needs to default and bound screen references.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskContext {
    pub task_index: u32,
    pub screen_count: u32,
}

fn normalize_words(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut depth = 0u32;
    for ch in text.chars() {
        match ch {
            '(' | '[' => depth += 1,
            ')' | ']' => depth = depth.saturating_sub(1),
            _ if depth > 0 => {}
            '&' => out.push_str(" and "),
            c if c.is_alphanumeric() => out.extend(c.to_lowercase()),
            _ => out.push(' '),
        }
    }
    let mut words: Vec<&str> = out
        .split_whitespace()
        .filter(|w| *w != "the")
        .collect();
    // Leading numbering: "8", "h8", "heuristic 8".
    while let Some(first) = words.first() {
        let numbered = first.chars().all(|c| c.is_ascii_digit())
            || *first == "heuristic"
            || (first.len() > 1
                && first.starts_with('h')
                && first[1..].chars().all(|c| c.is_ascii_digit()));
        if numbered && words.len() > 1 {
            words.remove(0);
        } else {
            break;
        }
    }
    let mut joined = String::new();
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            joined.push(' ');
        }
        joined.push_str(match *w {
            "minimalistic" => "minimalist",
            "documentations" => "documentation",
            other => other,
        });
    }
    joined
}

/// Resolves a free-text heuristic label against the full catalog.
/// Case, punctuation, a leading number, a parenthetical and the
/// "minimalist"/"minimalistic" variation are ignored.
pub fn normalize_heuristic_name(free_text: &str) -> Option<HeuristicId> {
    let norm = normalize_words(free_text);
    if norm.is_empty() {
        return None;
    }
    if let Some(id) = heuristic_catalog()
        .iter()
        .find(|h| normalize_words(h.name) == norm)
        .map(|h| h.id)
    {
        return Some(id);
    }
    let bare = norm.strip_prefix("heuristic ").unwrap_or(&norm);
    bare.parse::<i64>().ok().and_then(|n| HeuristicId::new(n).ok())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Heuristic,
    Issue,
    Rationale,
    Severity,
    SeverityRationale,
    Screens,
}

fn field_for_label(label: &str) -> Option<Field> {
    let lowered = label.to_lowercase();
    let norm = lowered
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty() && *w != "the")
        .collect::<Vec<_>>()
        .join(" ");
    match norm.as_str() {
        "heuristic" | "heuristic violated" | "violated heuristic" => Some(Field::Heuristic),
        "issue" | "problem" | "description" | "issue description" | "finding" => Some(Field::Issue),
        "rationale" | "reason" | "why" | "issue rationale" => Some(Field::Rationale),
        "severity" | "severity rating" | "rating" => Some(Field::Severity),
        "severity rationale" | "severity reason" | "reason for severity"
        | "reason for severity rating" | "severity justification" => {
            Some(Field::SeverityRationale)
        }
        "screens" | "screen" | "screenshots" | "screenshot" | "screen references" => {
            Some(Field::Screens)
        }
        _ => {
            // "Heuristic 3: ..." keeps its number in the label.
            let rest = label.trim().to_ascii_lowercase();
            let rest = rest.strip_prefix("heuristic")?;
            rest.trim()
                .chars()
                .all(|c| c.is_ascii_digit() || c == '#')
                .then_some(Field::Heuristic)
        }
    }
}

/// Strips list markers, heading markers and emphasis from a line.
fn clean_line(line: &str) -> String {
    let without_emphasis = line.replace("**", "").replace("__", "");
    let mut s = without_emphasis.trim();
    loop {
        let before = s;
        s = s.trim_start_matches('#').trim_start();
        for marker in ["- ", "* ", "• ", "+ ", "> "] {
            if let Some(rest) = s.strip_prefix(marker) {
                s = rest.trim_start();
            }
        }
        let digits = s.chars().take_while(|c| c.is_ascii_digit()).count();
        if digits > 0 && digits <= 2 {
            let rest = &s[digits..];
            if let Some(r) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
                s = r.trim_start();
            }
        }
        if s == before {
            break;
        }
    }
    s.to_owned()
}

/// Splits `Label: value` when the label is short enough to be one.
fn split_label(line: &str) -> Option<(&str, &str)> {
    let (label, value) = line.split_once(':')?;
    let words = label.split_whitespace().count();
    if words == 0 || words > 10 || label.contains(['.', '!', '?']) {
        return None;
    }
    Some((label.trim(), value.trim()))
}

fn field_line(line: &str) -> Option<(Field, &str)> {
    let (label, value) = split_label(line)?;
    field_for_label(label).map(|f| (f, value))
}

/// A line naming a heuristic and nothing else.
fn heading_line(line: &str) -> Option<String> {
    let bare = line.trim_end_matches(':').trim();
    if bare.is_empty() {
        return None;
    }
    if let Some((Field::Heuristic, value)) = field_line(line) {
        if !value.is_empty() {
            return Some(value.to_owned());
        }
    }
    normalize_heuristic_name(bare).map(|_| bare.to_owned())
}

/// `Known heuristic name: text` on a single line.
fn header_style_line(line: &str) -> Option<(&str, &str)> {
    let (label, value) = split_label(line)?;
    if value.is_empty() || field_for_label(label).is_some() {
        return None;
    }
    Some((label, value))
}

fn excerpt(text: &str) -> String {
    const MAX: usize = 80;
    let flat: String = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if flat.chars().count() <= MAX {
        flat
    } else {
        let mut s: String = flat.chars().take(MAX).collect();
        s.push('…');
        s
    }
}

fn tail_excerpt(text: &str) -> String {
    const MAX: usize = 60;
    let trimmed = text.trim_end();
    let count = trimmed.chars().count();
    trimmed.chars().skip(count.saturating_sub(MAX)).collect()
}

/// Splits text into blocks of cleaned lines. Blank lines always separate
/// blocks; a `Heuristic:` line, a repeated `Issue:` line or a heuristic
/// header line also starts a new block.
fn split_blocks(text: &str) -> Vec<Vec<String>> {
    let mut blocks: Vec<Vec<String>> = Vec::new();
    let mut current: Vec<String> = Vec::new();
    let mut has_issue_field = false;
    for raw in text.lines() {
        let line = clean_line(raw);
        if line.is_empty() {
            if !current.is_empty() {
                blocks.push(core::mem::take(&mut current));
            }
            has_issue_field = false;
            continue;
        }
        let field = field_line(&line).map(|(f, _)| f);
        let starts_new = !current.is_empty()
            && (field == Some(Field::Heuristic)
                || (field == Some(Field::Issue) && has_issue_field)
                || (field.is_none()
                    && (header_style_line(&line)
                        .is_some_and(|(label, _)| normalize_heuristic_name(label).is_some())
                        || heading_line(&line).is_some())));
        if starts_new {
            blocks.push(core::mem::take(&mut current));
            has_issue_field = false;
        }
        if field == Some(Field::Issue) {
            has_issue_field = true;
        }
        current.push(line);
    }
    if !current.is_empty() {
        blocks.push(current);
    }
    blocks
}

#[derive(Default)]
struct Fields {
    lead: String,
    heuristic: Option<String>,
    issue: Option<String>,
    rationale: Option<String>,
    severity: Option<String>,
    severity_rationale: Option<String>,
    screens: Option<String>,
}

impl Fields {
    fn slot(&mut self, f: Field) -> &mut Option<String> {
        match f {
            Field::Heuristic => &mut self.heuristic,
            Field::Issue => &mut self.issue,
            Field::Rationale => &mut self.rationale,
            Field::Severity => &mut self.severity,
            Field::SeverityRationale => &mut self.severity_rationale,
            Field::Screens => &mut self.screens,
        }
    }

    fn read(lines: &[String]) -> Fields {
        let mut fields = Fields::default();
        let mut last: Option<Field> = None;
        for line in lines {
            if let Some((f, value)) = field_line(line) {
                let slot = fields.slot(f);
                match slot {
                    Some(existing) if !value.is_empty() => {
                        if !existing.is_empty() {
                            existing.push(' ');
                        }
                        existing.push_str(value);
                    }
                    Some(_) => {}
                    None => *slot = Some(value.to_owned()),
                }
                last = Some(f);
            } else {
                let target = match last {
                    Some(f) => fields.slot(f).get_or_insert_with(String::new),
                    None => &mut fields.lead,
                };
                if !target.is_empty() {
                    target.push(' ');
                }
                target.push_str(line);
            }
        }
        fields
    }
}

/// Leading-integer rule: `"3 - major"` is 3. Falls back to the first
/// standalone integer, so `"Major (3)"` is 3 as well.
fn parse_severity(text: &str) -> Option<Severity> {
    let t = text.trim();
    let lead: String = t.chars().take_while(|c| c.is_ascii_digit()).collect();
    let number = if !lead.is_empty() {
        lead.parse::<i64>().ok()
    } else {
        t.split(|c: char| !c.is_ascii_digit())
            .find(|s| !s.is_empty())
            .and_then(|s| s.parse::<i64>().ok())
    };
    number.and_then(|n| Severity::new(n).ok())
}

/// Finds `severity: N`, `severity N` or `(severity rating N)` inside prose.
fn inline_severity(text: &str) -> Option<Severity> {
    let lower = text.to_lowercase();
    lower.match_indices("severity").find_map(|(at, word)| {
        let rest = lower[at + word.len()..].trim_start();
        let rest = rest.strip_prefix("rating").unwrap_or(rest);
        let rest = rest.trim_start_matches([':', ' ', '=', '-', '(']);
        let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
        digits.parse::<i64>().ok().and_then(|n| Severity::new(n).ok())
    })
}

fn parse_screens(text: Option<&str>, screen_count: u32) -> Vec<u32> {
    let all = || (1..=screen_count).collect::<Vec<u32>>();
    let Some(text) = text else { return all() };
    let lower = text.to_lowercase();
    if lower.split(|c: char| !c.is_alphanumeric()).any(|w| w == "all" || w == "every") {
        return all();
    }
    let mut out: Vec<u32> = Vec::new();
    let mut push = |n: u32| {
        if n >= 1 && n <= screen_count && !out.contains(&n) {
            out.push(n);
        }
    };
    let tokens: Vec<&str> = lower
        .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .collect();
    let mut i = 0;
    while i < tokens.len() {
        let tok = tokens[i];
        let range = tok.split_once(['-', '–']).and_then(|(a, b)| {
            Some((digits_of(a)?, digits_of(b)?))
        });
        if let Some((a, b)) = range {
            for n in a.min(b)..=a.max(b).min(a.min(b) + 64) {
                push(n);
            }
        } else if let Some(a) = digits_of(tok) {
            if tokens.get(i + 1) == Some(&"to") {
                if let Some(b) = tokens.get(i + 2).and_then(|t| digits_of(t)) {
                    for n in a.min(b)..=a.max(b).min(a.min(b) + 64) {
                        push(n);
                    }
                    i += 3;
                    continue;
                }
            }
            push(a);
        }
        i += 1;
    }
    if out.is_empty() {
        all()
    } else {
        out
    }
}

fn digits_of(token: &str) -> Option<u32> {
    let digits: String = token.chars().filter(|c| c.is_ascii_digit()).collect();
    let letters = token.chars().filter(|c| c.is_alphabetic()).count();
    // Accept "3", "#3", "s3" style tokens but not words with digits inside.
    if digits.is_empty() || letters > 1 {
        return None;
    }
    digits.parse().ok()
}

fn ends_mid_sentence(text: &str) -> bool {
    let Some(last_line) = text.lines().rev().map(clean_line).find(|l| !l.is_empty()) else {
        return false;
    };
    if let Some((Field::Screens | Field::Severity, value)) = field_line(&last_line) {
        if !value.is_empty() {
            return false;
        }
    }
    !matches!(
        last_line.chars().last(),
        Some('.' | '!' | '?' | ')' | ']' | '"' | '\'' | '”' | '’' | '*' | '`')
    )
}

enum Resolution {
    Known(HeuristicId),
    OutOfBatch(HeuristicId),
    Unknown,
}

fn resolve(label: &str, batch: Batch) -> Resolution {
    match normalize_heuristic_name(label) {
        Some(id) if batch.contains(id) => Resolution::Known(id),
        Some(id) => Resolution::OutOfBatch(id),
        None => Resolution::Unknown,
    }
}

/// Parses one completion for one `(task, batch)` exchange. Never fails;
/// problems are reported as warnings.
pub fn parse_issues(raw: &CompletionResult, batch: Batch, task: TaskContext) -> ParseOutcome {
    let text = raw.raw_text.replace("\r\n", "\n");
    let mut issues = Vec::new();
    let mut warnings = Vec::new();
    let mut block_count = 0;
    let mut context: Option<String> = None;

    for block in split_blocks(&text) {
        if block.len() == 1 {
            if let Some(label) = heading_line(&block[0]) {
                context = Some(label);
                continue;
            }
        }
        // A heading line at the top of a larger block sets context too.
        let mut body: &[String] = &block;
        if block.len() > 1 && field_line(&block[0]).is_none() {
            if let Some(label) = heading_line(&block[0]) {
                context = Some(label);
                body = &block[1..];
            }
        }
        block_count += 1;
        let fields = Fields::read(body);

        let (label, description) = if let Some(issue) = fields.issue.clone() {
            let label = fields.heuristic.clone().or_else(|| context.clone());
            (label, issue)
        } else if let Some((label, value)) = body.first().and_then(|l| header_style_line(l)) {
            let mut description = String::from(value);
            for line in &body[1..] {
                if field_line(line).is_some() {
                    break;
                }
                description.push(' ');
                description.push_str(line);
            }
            (Some(label.to_owned()), description)
        } else if let (Some(ctx), false) = (context.clone(), fields.lead.is_empty()) {
            // Prose under a heading, e.g. a bullet following "Error prevention".
            (Some(ctx), fields.lead.clone())
        } else {
            warnings.push(ParseWarning {
                kind: WarningKind::UnlabeledBlock,
                span: excerpt(&body.join(" ")),
            });
            continue;
        };

        if label.is_some() {
            if let Some(h) = &fields.heuristic {
                context = Some(h.clone());
            }
        }

        let heuristic_id = match label.as_deref().map(|l| resolve(l, batch)) {
            Some(Resolution::Known(id)) => Some(id),
            Some(Resolution::OutOfBatch(id)) => {
                warnings.push(ParseWarning {
                    kind: WarningKind::UnknownHeuristic,
                    span: format!(
                        "heuristic {id} ({}) is outside the {} batch: {}",
                        id.name(),
                        batch.selector(),
                        excerpt(&description)
                    ),
                });
                None
            }
            Some(Resolution::Unknown) | None => {
                warnings.push(ParseWarning {
                    kind: WarningKind::UnknownHeuristic,
                    span: format!(
                        "{}: {}",
                        label.as_deref().unwrap_or("<no heuristic>"),
                        excerpt(&description)
                    ),
                });
                None
            }
        };

        let severity = match fields.severity.as_deref() {
            Some(text) => parse_severity(text),
            None if fields.issue.is_none() => inline_severity(&description),
            None => None,
        };
        if severity.is_none() {
            warnings.push(ParseWarning {
                kind: WarningKind::MissingSeverity,
                span: excerpt(&description),
            });
        }
        issues.push(ParsedIssue {
            heuristic_id,
            description,
            rationale: fields.rationale.unwrap_or_default(),
            severity,
            severity_rationale: fields.severity_rationale,
            screen_refs: parse_screens(fields.screens.as_deref(), task.screen_count),
            task_index: task.task_index,
        });
    }

    let missing: Vec<HeuristicId> = batch
        .heuristics()
        .map(|h| h.id)
        .filter(|id| !issues.iter().any(|i: &ParsedIssue| i.heuristic_id == Some(*id)))
        .collect();
    let truncated = raw.finish_reason == FinishReason::LengthLimit
        || (!missing.is_empty() && ends_mid_sentence(&text));
    if truncated {
        warnings.push(ParseWarning {
            kind: WarningKind::TruncatedTail,
            span: tail_excerpt(&text),
        });
    }
    for id in missing {
        warnings.push(ParseWarning {
            kind: WarningKind::NoIssuesForHeuristic,
            span: format!("{id}. {}", id.name()),
        });
    }

    ParseOutcome {
        issues,
        warnings,
        truncated,
        block_count,
    }
}

/// Renders issues in the instructed labeled-line format.
pub fn render_labeled(issues: &[ParsedIssue]) -> String {
    let mut out = String::new();
    for (i, issue) in issues.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let heuristic = issue.heuristic_id.map_or("Unknown", |h| h.name());
        let _ = writeln!(out, "Heuristic: {heuristic}");
        let _ = writeln!(out, "Issue: {}", issue.description);
        let _ = writeln!(out, "Rationale: {}", issue.rationale);
        if let Some(sev) = issue.severity {
            let _ = writeln!(out, "Severity: {sev}");
        }
        if let Some(r) = &issue.severity_rationale {
            let _ = writeln!(out, "Severity rationale: {r}");
        }
        let screens: Vec<String> = issue.screen_refs.iter().map(|s| format!("{s}")).collect();
        let _ = writeln!(out, "Screens: {}", screens.join(", "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const CTX: TaskContext = TaskContext {
        task_index: 1,
        screen_count: 5,
    };

    fn h(id: i64) -> HeuristicId {
        HeuristicId::new(id).unwrap()
    }

    #[test]
    fn normalizes_names() {
        assert_eq!(normalize_heuristic_name("Aesthetic and minimalistic design"), Some(h(8)));
        assert_eq!(normalize_heuristic_name("aesthetic and minimalist design"), Some(h(8)));
        assert_eq!(normalize_heuristic_name("AESTHETIC & MINIMALIST DESIGN."), Some(h(8)));
        assert_eq!(normalize_heuristic_name("Gestalt proximity"), None);
        assert_eq!(
            normalize_heuristic_name("Help users recognize, diagnose, and recover from errors"),
            Some(h(9))
        );
        assert_eq!(normalize_heuristic_name("Match between system and real world"), Some(h(2)));
        assert_eq!(normalize_heuristic_name("1. Visibility of System Status"), Some(h(1)));
        assert_eq!(normalize_heuristic_name("Heuristic 4"), Some(h(4)));
        assert_eq!(normalize_heuristic_name("Error prevention (H5)"), Some(h(5)));
        assert_eq!(normalize_heuristic_name(""), None);
        assert_eq!(normalize_heuristic_name("12"), None);
    }

    #[test]
    fn labeled_block() {
        let raw = CompletionResult::stop(
            "Heuristic: Visibility of system status\nIssue: no progress indication\nRationale: users cannot tell how far along they are\nSeverity: 2\nSeverity rationale: annoying but not blocking\nScreens: 1, 2\n",
        );
        let out = parse_issues(&raw, Batch::FirstFive, CTX);
        assert_eq!(out.issues.len(), 1);
        let issue = &out.issues[0];
        assert_eq!(issue.heuristic_id, Some(h(1)));
        assert_eq!(issue.description, "no progress indication");
        assert_eq!(issue.severity, Severity::new(2).ok());
        assert_eq!(issue.screen_refs, vec![1, 2]);
        assert_eq!(issue.severity_rationale.as_deref(), Some("annoying but not blocking"));
        assert!(!out.truncated);
        assert_eq!(out.count(WarningKind::NoIssuesForHeuristic), 4);
    }

    #[test]
    fn empty_text() {
        let out = parse_issues(&CompletionResult::stop(""), Batch::SecondFive, CTX);
        assert!(out.issues.is_empty());
        assert_eq!(out.count(WarningKind::NoIssuesForHeuristic), 5);
        assert_eq!(out.warnings.len(), 5);
        assert!(!out.truncated);
        assert_eq!(out.block_count, 0);
    }

    #[test]
    fn header_style_with_length_limit() {
        let mut raw = CompletionResult::stop(
            "Recognition rather than recall: Users must remember their filters between screens.\n\nAesthetic and Minimalist Design: The \"Tour req",
        );
        raw.finish_reason = FinishReason::LengthLimit;
        let out = parse_issues(&raw, Batch::SecondFive, CTX);
        assert!(out.truncated);
        assert_eq!(out.count(WarningKind::TruncatedTail), 1);
        assert_eq!(out.issues.len(), 2);
        assert_eq!(out.issues[1].heuristic_id, Some(h(8)));
        assert_eq!(out.issues[1].description, "The \"Tour req");
        assert_eq!(out.issues[1].screen_refs, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn mid_sentence_end_without_length_signal() {
        let raw = CompletionResult::stop(
            "Visibility of system status: There is no indication of the progress within the setup process.\n\nUser control and freedom: The back button is hidden on the",
        );
        let out = parse_issues(&raw, Batch::FirstFive, CTX);
        assert!(out.truncated);
        let complete = CompletionResult::stop(
            "Visibility of system status: There is no indication of the progress.",
        );
        assert!(!parse_issues(&complete, Batch::FirstFive, CTX).truncated);
    }

    #[test]
    fn severity_leading_integer() {
        assert_eq!(parse_severity("3 - major"), Severity::new(3).ok());
        assert_eq!(parse_severity("Major (3)"), Severity::new(3).ok());
        assert_eq!(parse_severity("7"), None);
        assert_eq!(parse_severity("high"), None);
    }

    #[test]
    fn screens_forms() {
        assert_eq!(parse_screens(Some("1, 3"), 5), vec![1, 3]);
        assert_eq!(parse_screens(Some("Screens 2-4"), 5), vec![2, 3, 4]);
        assert_eq!(parse_screens(Some("screen 2 to 3"), 5), vec![2, 3]);
        assert_eq!(parse_screens(Some("all screens"), 3), vec![1, 2, 3]);
        assert_eq!(parse_screens(Some("9"), 3), vec![1, 2, 3]);
        assert_eq!(parse_screens(None, 2), vec![1, 2]);
        assert_eq!(parse_screens(Some("#2, s3"), 4), vec![2, 3]);
    }

    #[test]
    fn unknown_and_out_of_batch_heuristics_are_kept() {
        let raw = CompletionResult::stop(
            "Heuristic: Gestalt proximity\nIssue: buttons float apart\nSeverity: 1\n\nHeuristic: Help and documentation\nIssue: no help link\nSeverity: 2",
        );
        let out = parse_issues(&raw, Batch::FirstFive, CTX);
        assert_eq!(out.issues.len(), 2);
        assert!(out.issues.iter().all(|i| i.heuristic_id.is_none()));
        assert_eq!(out.count(WarningKind::UnknownHeuristic), 2);
    }

    #[test]
    fn headings_and_bullets() {
        let raw = CompletionResult::stop(
            "Here is my evaluation of the first five heuristics.\n\n### 1. Visibility of System Status\n- **Issue:** No progress bar on the setup screens.\n  **Severity:** 3 (major)\n- **Issue:** Loading spinner has no label.\n  **Severity:** 1\n\n**Error prevention**\n\n- Deleting a saved search has no confirmation. Severity: 2\n",
        );
        let out = parse_issues(&raw, Batch::FirstFive, CTX);
        assert_eq!(out.count(WarningKind::UnlabeledBlock), 1);
        assert_eq!(out.issues.len(), 3);
        assert_eq!(out.issues[0].heuristic_id, Some(h(1)));
        assert_eq!(out.issues[0].severity, Severity::new(3).ok());
        assert_eq!(out.issues[1].heuristic_id, Some(h(1)));
        assert_eq!(out.issues[1].description, "Loading spinner has no label.");
        assert_eq!(out.issues[2].heuristic_id, Some(h(5)));
        assert_eq!(out.issues[2].severity, Severity::new(2).ok());
        assert_eq!(out.block_count, out.issues.len() + out.block_warning_count());
    }

    #[test]
    fn render_then_parse() {
        let issues = vec![
            ParsedIssue {
                heuristic_id: Some(h(6)),
                description: "Filters reset between screens".into(),
                rationale: String::new(),
                severity: None,
                severity_rationale: None,
                screen_refs: vec![3, 1],
                task_index: 1,
            },
            ParsedIssue {
                heuristic_id: Some(h(8)),
                description: "Whitespace: too large".into(),
                rationale: "feels padded".into(),
                severity: Severity::new(0).ok(),
                severity_rationale: Some("cosmetic".into()),
                screen_refs: vec![2],
                task_index: 1,
            },
        ];
        let text = render_labeled(&issues);
        let out = parse_issues(&CompletionResult::stop(text), Batch::SecondFive, CTX);
        assert_eq!(out.issues, issues);
        assert_eq!(out.count(WarningKind::MissingSeverity), 1);
    }
}
