//! Builds the two per-task evaluation prompts (first five heuristics, then
//! the second five) sent with the task's ordered screenshots.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::sha256_parts;
use crate::heuristic::{Batch, HeuristicId};
use crate::model::{Screenshot, UserTask};

/// Sentence telling the model the screenshots form an ordered flow.
pub const ORDERING_SENTENCE: &str = "The screenshots are given in the order that they show up in the application, so consider the interaction across the screens.";

/// Clause asking for a minimum number of findings per heuristic.
pub const FLOOR_CLAUSE: &str = "For each heuristic, identify at least 2 problems.";

/// Evaluation prompt body. Placeholders: `{scenario_preamble}`,
/// `{batch_selector}`, `{floor_clause}`, `{heuristic_list}`,
/// `{format_instructions}`.
pub const DEFAULT_EVALUATION_TEMPLATE: &str = "{scenario_preamble} Given the screenshots provided, perform a heuristic evaluation using the {batch_selector} of Nielsen's 10 heuristics. (The screenshots are given in the order that they show up in the application, so consider the interaction across the screens.){floor_clause} Identify all heuristic issues, provide a rationale for why this is an issue, give a severity rating (0-4) and reason for the severity rating. Be as specific as possible about where the heuristics fail.

{heuristic_list}

{format_instructions}";

/// Labeled-line output contract understood by the response parser.
pub const DEFAULT_FORMAT_INSTRUCTIONS: &str = "Report each issue as its own block of labeled lines, with a blank line between blocks:
Heuristic: <one heuristic name from the list above>
Issue: <what the problem is and where it occurs>
Rationale: <why this is an issue>
Severity: <a single integer from 0 to 4>
Severity rationale: <reason for the severity rating>
Screens: <comma-separated screenshot numbers, counting from 1 in the order given>
Keep each field on a single line.";

/// Prompt wording; users may override either part from the project's
/// `prompts/` directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplates {
    pub evaluation: String,
    pub format_instructions: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            evaluation: DEFAULT_EVALUATION_TEMPLATE.into(),
            format_instructions: DEFAULT_FORMAT_INSTRUCTIONS.into(),
        }
    }
}

impl PromptTemplates {
    pub fn content_hash(&self) -> String {
        sha256_parts([
            self.evaluation.as_bytes(),
            self.format_instructions.as_bytes(),
        ])
    }

    pub fn is_default(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptOptions {
    /// Include the "at least 2 problems" clause.
    pub at_least_two_floor: bool,
    pub templates: PromptTemplates,
    /// `None` sends the whole prompt as a single user turn.
    pub system_text: Option<String>,
}

impl Default for PromptOptions {
    fn default() -> Self {
        Self {
            at_least_two_floor: true,
            templates: PromptTemplates::default(),
            system_text: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub task_index: u32,
    pub system_text: Option<String>,
    pub user_text: String,
    pub attachments: Vec<Screenshot>,
    pub batch: Batch,
    pub target_heuristics: Vec<HeuristicId>,
    pub response_format_instructions: String,
}

impl PromptRequest {
    /// Hash over everything that is sent on the wire. Attachments contribute
    /// their content hashes.
    pub fn content_hash(&self) -> String {
        let system = self.system_text.as_deref().unwrap_or("");
        let mut parts: Vec<&[u8]> = Vec::with_capacity(3 + self.attachments.len());
        parts.push(system.as_bytes());
        parts.push(self.user_text.as_bytes());
        parts.push(self.batch.slug().as_bytes());
        for a in &self.attachments {
            parts.push(a.content_hash.as_bytes());
        }
        sha256_parts(parts)
    }
}

/// `[User scenario: <text>]`, casing preserved.
pub fn render_scenario_preamble(scenario_text: &str) -> Result<String> {
    if scenario_text.trim().is_empty() {
        return Err(Error::EmptyScenario);
    }
    Ok(format!("[User scenario: {scenario_text}]"))
}

fn heuristic_list(batch: Batch) -> String {
    let mut out = String::from("The heuristics to consider in this exchange are:");
    for h in batch.heuristics() {
        let _ = write!(out, "\n{}. {}", h.id, h.name);
    }
    out
}

fn render_batch(task: &UserTask, options: &PromptOptions, batch: Batch) -> Result<PromptRequest> {
    let preamble = render_scenario_preamble(&task.scenario_text)?;
    let floor = if options.at_least_two_floor {
        format!(" {FLOOR_CLAUSE}")
    } else {
        String::new()
    };
    let templates = &options.templates;
    // Substitute the scenario last so user text cannot inject placeholders.
    let user_text = templates
        .evaluation
        .replace("{batch_selector}", batch.selector())
        .replace("{floor_clause}", &floor)
        .replace("{heuristic_list}", &heuristic_list(batch))
        .replace("{format_instructions}", &templates.format_instructions)
        .replace("{scenario_preamble}", &preamble);
    Ok(PromptRequest {
        task_index: task.task_index,
        system_text: options.system_text.clone(),
        user_text,
        attachments: task.screenshots.clone(),
        batch,
        target_heuristics: batch.heuristics().map(|h| h.id).collect(),
        response_format_instructions: templates.format_instructions.clone(),
    })
}

/// Both batch requests for a task: `[FirstFive, SecondFive]`.
pub fn build_evaluation_prompts(
    task: &UserTask,
    options: &PromptOptions,
) -> Result<[PromptRequest; 2]> {
    if task.screenshots.is_empty() {
        return Err(Error::EmptyTask(task.task_index));
    }
    Ok([
        render_batch(task, options, Batch::FirstFive)?,
        render_batch(task, options, Batch::SecondFive)?,
    ])
}
