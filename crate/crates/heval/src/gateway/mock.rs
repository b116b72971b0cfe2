//! Deterministic provider that replays canned responses from a directory.
//!
//! A request for task `n`, batch `first`/`second` reads `task{n}-{batch}.txt`,
//! preferring `<account>/task{n}-{batch}.txt` when an account is given.
//! Requests without attachments (judge prompts) read `judge.txt`. An
//! optional sibling `.toml` with the same stem scripts the reply:
//!
//! ```toml
//! finish = "length"   # stop | length | other
//! fail_times = 2      # transient failures before succeeding
//! always_fail = true  # every attempt fails with a 503
//! auth_error = true   # reply 401
//! ```

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use heval_core::model::{FinishReason, TokenUsage};
use heval_core::prompt::PromptRequest;
use serde::Deserialize;

use super::{Backend, CallError, RawCompletion};

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockMeta {
    #[serde(default)]
    pub finish: Option<String>,
    #[serde(default)]
    pub fail_times: u32,
    #[serde(default)]
    pub always_fail: bool,
    #[serde(default)]
    pub auth_error: bool,
}

#[derive(Debug)]
pub struct MockBackend {
    dir: PathBuf,
    failures: Mutex<HashMap<PathBuf, u32>>,
}

impl MockBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            failures: Mutex::new(HashMap::new()),
        }
    }

    pub fn key(request: &PromptRequest) -> String {
        if request.attachments.is_empty() {
            "judge".into()
        } else {
            format!("task{}-{}", request.task_index, request.batch.slug())
        }
    }

    fn locate(&self, key: &str, account: Option<&str>) -> Option<PathBuf> {
        let file = format!("{key}.txt");
        account
            .map(|a| self.dir.join(a).join(&file))
            .filter(|p| p.is_file())
            .or_else(|| Some(self.dir.join(&file)).filter(|p| p.is_file()))
    }

    fn meta(path: &Path) -> Result<MockMeta, CallError> {
        let meta_path = path.with_extension("toml");
        match std::fs::read_to_string(&meta_path) {
            Ok(text) => toml::from_str(&text)
                .map_err(|e| CallError::Fatal(format!("{}: {}", meta_path.display(), e.message()))),
            Err(_) => Ok(MockMeta::default()),
        }
    }
}

fn word_count(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

impl Backend for MockBackend {
    fn call(
        &self,
        request: &PromptRequest,
        account: Option<&str>,
        _api_key: Option<&str>,
    ) -> Result<RawCompletion, CallError> {
        let key = Self::key(request);
        let Some(path) = self.locate(&key, account) else {
            if key == "judge" {
                return Ok(RawCompletion {
                    text: "no".into(),
                    finish: FinishReason::Stop,
                    usage: TokenUsage::default(),
                });
            }
            return Err(CallError::Fatal(format!(
                "no mock fixture {key}.txt in {}",
                self.dir.display()
            )));
        };
        let meta = Self::meta(&path)?;
        if meta.auth_error {
            return Err(CallError::Credential("HTTP 401: mock credential rejected".into()));
        }
        if meta.always_fail {
            return Err(CallError::Transient("HTTP 503: mock outage".into()));
        }
        {
            let mut failures = self.failures.lock().unwrap();
            let seen = failures.entry(path.clone()).or_insert(0);
            if *seen < meta.fail_times {
                *seen += 1;
                return Err(CallError::Transient(format!("HTTP 503: scripted failure {seen}")));
            }
        }
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CallError::Fatal(format!("{}: {e}", path.display())))?;
        let finish = match meta.finish.as_deref() {
            None | Some("stop") => FinishReason::Stop,
            Some("length") => FinishReason::LengthLimit,
            Some(_) => FinishReason::Other,
        };
        Ok(RawCompletion {
            usage: TokenUsage {
                input: word_count(&request.user_text),
                output: word_count(&text),
            },
            text,
            finish,
        })
    }
}
