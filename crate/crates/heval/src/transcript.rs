//! Append-only JSONL record of every provider exchange.
//!
//! Each line is flushed to disk before its response is parsed, so a crash
//! mid-run still leaves the raw text of every completed call behind.
//! Attachments are stored as hash references into the task's screens
//! directory rather than inline image data.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use heval_core::model::{CompletionResult, MediaKind, RunId};
use heval_core::prompt::PromptRequest;
use heval_core::Batch;
use serde::{Deserialize, Serialize};

use crate::error::{io_at, json_at, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttachmentRef {
    pub screen_index: u32,
    pub media_kind: MediaKind,
    pub content_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub system_text: Option<String>,
    pub user_text: String,
    pub attachments: Vec<AttachmentRef>,
    pub max_output_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub run_id: RunId,
    pub task_index: u32,
    pub batch: Batch,
    pub request_hash: String,
    pub provider: String,
    pub account: Option<String>,
    pub model_id: String,
    pub request: RequestRecord,
    pub response: Option<CompletionResult>,
    pub error: Option<String>,
}

impl RequestRecord {
    pub fn of(request: &PromptRequest, max_output_tokens: u32) -> Self {
        Self {
            system_text: request.system_text.clone(),
            user_text: request.user_text.clone(),
            attachments: request
                .attachments
                .iter()
                .map(|s| AttachmentRef {
                    screen_index: s.screen_index,
                    media_kind: s.media_kind,
                    content_hash: s.content_hash.clone(),
                })
                .collect(),
            max_output_tokens,
        }
    }
}

pub struct TranscriptWriter {
    path: PathBuf,
    file: File,
}

impl TranscriptWriter {
    pub fn append_to(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_at(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    /// Writes one line and syncs it.
    pub fn write(&mut self, line: &TranscriptLine) -> Result<()> {
        let mut text = serde_json::to_string(line).map_err(json_at(&self.path))?;
        text.push('\n');
        self.file.write_all(text.as_bytes()).map_err(io_at(&self.path))?;
        self.file.sync_data().map_err(io_at(&self.path))
    }
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptLine>> {
    let file = File::open(path).map_err(io_at(path))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_at(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(json_at(path))?);
    }
    Ok(out)
}
