//! On-disk project directory.
//!
//! ```text
//! manifest.json            tasks, run ids and the derived triage state
//! journal.jsonl            one triage decision per line, append-only
//! tasks/<n>/screens/       screenshots named by content hash
//! runs/<id>/issues.json    the run and its issues as recorded, before triage
//! runs/<id>/transcripts.jsonl
//! runs/<id>/warnings.json  parser warnings
//! proposals.json           duplicate proposal batches
//! links.json               master link candidates
//! prompts/                 editable prompt templates
//! providers.toml
//! ```
//!
//! The journal is the source of truth for triage. On load it is replayed
//! over the recorded inputs and `manifest.json` is rewritten if it
//! disagrees, which covers a crash between a journal append and the
//! manifest write that follows it.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use heval_core::dedup::{MasterMatch, ProposalBatch, ProposalStatus};
use heval_core::model::{
    EvaluationRun, IssueId, MasterSet, ProposalId, RunId, Screenshot, UserTask,
};
use heval_core::parse::ParseWarning;
use heval_core::prompt::PromptTemplates;
use heval_core::triage::{DecisionKind, ProjectState, TriageDecision, SCHEMA_VERSION};
use heval_core::HeuristicId;
use serde::{Deserialize, Serialize};

use crate::config::DEFAULT_PROVIDERS_TOML;
use crate::error::{io_at, json_at, HevalError, Result};

pub const MANIFEST: &str = "manifest.json";
pub const JOURNAL: &str = "journal.jsonl";
const LOCK: &str = ".lock";
const PROPOSALS: &str = "proposals.json";
const LINKS: &str = "links.json";

/// Serialized view of a project. Field order and map ordering are fixed so
/// equal states give byte-identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub app_id: String,
    pub name: String,
    pub created_at: DateTime<Utc>,
    pub schema_version: u32,
    pub tasks: Vec<UserTask>,
    pub runs: Vec<RunId>,
    pub master_version: u64,
    pub master: MasterSet,
    pub duplicate_links: BTreeMap<IssueId, IssueId>,
    pub issue_heuristics: BTreeMap<IssueId, HeuristicId>,
    pub proposal_status: BTreeMap<ProposalId, ProposalStatus>,
}

impl Manifest {
    pub fn of(state: &ProjectState) -> Self {
        Self {
            app_id: state.app_id.clone(),
            name: state.name.clone(),
            created_at: state.created_at,
            schema_version: state.schema_version,
            tasks: state.tasks.clone(),
            runs: state.runs.iter().map(|r| r.run_id.clone()).collect(),
            master_version: state.master_version,
            master: state.master.clone(),
            duplicate_links: state
                .issues()
                .filter_map(|i| Some((i.issue_id.clone(), i.duplicate_of.clone()?)))
                .collect(),
            issue_heuristics: state.issue_heuristics.clone(),
            proposal_status: state
                .proposals()
                .map(|p| (p.proposal_id.clone(), p.status))
                .collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("manifest serializes");
        out.push(b'\n');
        out
    }
}

/// Writer lock held for the lifetime of a writable [`Store`].
#[derive(Debug)]
struct Lock(PathBuf);

impl Lock {
    fn take(root: &Path) -> Result<Self> {
        let path = root.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(HevalError::Locked(path)),
            Err(e) => Err(io_at(&path)(e)),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    state: ProjectState,
    lock: Option<Lock>,
    warnings: Vec<String>,
}

/// Writes `bytes` to `path` via a synced temporary file and a rename.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp).map_err(io_at(&tmp))?;
        f.write_all(bytes).map_err(io_at(&tmp))?;
        f.sync_all().map_err(io_at(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_at(path))?;
    if let Some(dir) = path.parent() {
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_at(path))?;
    serde_json::from_str(&text).map_err(json_at(path))
}

fn read_json_or_default<T: for<'de> Deserialize<'de> + Default>(path: &Path) -> Result<T> {
    if path.exists() {
        read_json(path)
    } else {
        Ok(T::default())
    }
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("value serializes");
    out.push(b'\n');
    out
}

pub(crate) fn slugify(text: &str) -> String {
    let mut out = String::new();
    for c in text.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    let out = out.trim_end_matches('-').to_string();
    if out.is_empty() {
        "app".into()
    } else {
        out
    }
}

/// Journal lines that parsed, plus the raw text of a torn final line.
struct JournalRead {
    decisions: Vec<TriageDecision>,
    torn_tail: Option<String>,
}

fn read_journal(path: &Path) -> Result<JournalRead> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(io_at(path)(e)),
    };
    let lines: Vec<&str> = text.split('\n').collect();
    let last_content = lines.iter().rposition(|l| !l.trim().is_empty());
    let mut decisions = Vec::new();
    let mut torn_tail = None;
    for (n, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<TriageDecision>(line) {
            Ok(d) => decisions.push(d),
            Err(_) if Some(n) == last_content => torn_tail = Some(line.to_string()),
            Err(e) => {
                return Err(HevalError::Format {
                    path: path.to_path_buf(),
                    message: format!("line {}: {e}", n + 1),
                })
            }
        }
    }
    Ok(JournalRead {
        decisions,
        torn_tail,
    })
}

fn journal_text(decisions: &[TriageDecision]) -> String {
    decisions
        .iter()
        .map(|d| serde_json::to_string(d).expect("decision serializes") + "\n")
        .collect()
}

/// Decisions file for `triage apply`: an array of decisions, each with an
/// optional actor.
#[derive(Debug, Deserialize)]
pub struct DecisionInput {
    #[serde(default)]
    pub actor: Option<String>,
    #[serde(flatten)]
    pub kind: DecisionKind,
}

impl Store {
    /// Creates a project in `root`, which must be absent or empty.
    pub fn init(root: &Path, name: &str) -> Result<Store> {
        if root.exists() {
            let mut entries = fs::read_dir(root).map_err(io_at(root))?;
            if entries.next().is_some() {
                return Err(HevalError::AlreadyExists(root.to_path_buf()));
            }
        }
        for dir in ["tasks", "runs", "prompts", "mock", "reports"] {
            let d = root.join(dir);
            fs::create_dir_all(&d).map_err(io_at(&d))?;
        }
        let lock = Lock::take(root)?;
        let templates = PromptTemplates::default();
        let files = [
            ("prompts/evaluation.txt", templates.evaluation.as_str()),
            ("prompts/format.txt", templates.format_instructions.as_str()),
            ("providers.toml", DEFAULT_PROVIDERS_TOML),
        ];
        for (rel, text) in files {
            write_atomic(&root.join(rel), text.as_bytes())?;
        }
        let state = ProjectState::new(slugify(name), name, Utc::now());
        let store = Store {
            root: root.to_path_buf(),
            state,
            lock: Some(lock),
            warnings: Vec::new(),
        };
        store.write_manifest()?;
        File::create(root.join(JOURNAL)).map_err(io_at(&root.join(JOURNAL)))?;
        Ok(store)
    }

    /// Opens for writing; fails if another writer holds the lock.
    pub fn open(root: &Path) -> Result<Store> {
        Self::check_project(root)?;
        let lock = Lock::take(root)?;
        Self::load(root, Some(lock))
    }

    /// Opens without taking the lock. Nothing on disk is modified.
    pub fn open_read_only(root: &Path) -> Result<Store> {
        Self::load(root, None)
    }

    fn check_project(root: &Path) -> Result<()> {
        if root.join(MANIFEST).is_file() {
            Ok(())
        } else {
            Err(HevalError::NotAProject(root.to_path_buf()))
        }
    }

    fn load(root: &Path, lock: Option<Lock>) -> Result<Store> {
        Self::check_project(root)?;
        let manifest_path = root.join(MANIFEST);
        let raw: serde_json::Value = read_json(&manifest_path)?;
        let found = raw["schema_version"].as_u64().unwrap_or(0) as u32;
        if found > SCHEMA_VERSION {
            return Err(HevalError::IncompatibleVersion {
                found,
                supported: SCHEMA_VERSION,
            });
        }
        let manifest: Manifest =
            serde_json::from_value(raw).map_err(json_at(&manifest_path))?;

        let mut base = ProjectState::new(manifest.app_id.clone(), manifest.name.clone(), manifest.created_at);
        base.schema_version = manifest.schema_version;
        base.tasks = manifest.tasks.clone();
        for id in &manifest.runs {
            let path = root.join("runs").join(id.as_str()).join("issues.json");
            let mut run: EvaluationRun = read_json(&path)?;
            for issue in &mut run.issues {
                issue.duplicate_of = None;
            }
            base.runs.push(run);
        }
        base.proposal_batches = read_json_or_default(&root.join(PROPOSALS))?;
        for p in base.proposal_batches.iter_mut().flat_map(|b| b.proposals.iter_mut()) {
            p.status = ProposalStatus::Proposed;
        }
        base.link_candidates = read_json_or_default(&root.join(LINKS))?;

        let journal_path = root.join(JOURNAL);
        let journal = read_journal(&journal_path)?;
        let mut warnings = Vec::new();
        let state = ProjectState::replay(base, &journal.decisions).map_err(|e| HevalError::Format {
            path: journal_path.clone(),
            message: format!("journal does not replay: {e}"),
        })?;

        let writable = lock.is_some();
        if let Some(tail) = &journal.torn_tail {
            if writable {
                let stamp = Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
                let q = root.join(format!("journal.quarantine-{stamp}.jsonl"));
                write_atomic(&q, format!("{tail}\n").as_bytes())?;
                write_atomic(&journal_path, journal_text(&journal.decisions).as_bytes())?;
                warnings.push(format!(
                    "incomplete final journal line moved to {}",
                    q.display()
                ));
            } else {
                warnings.push("journal ends with an incomplete line; ignored".into());
            }
        }

        let store = Store {
            root: root.to_path_buf(),
            state,
            lock,
            warnings,
        };
        let expected = Manifest::of(&store.state).to_bytes();
        let on_disk = fs::read(&manifest_path).map_err(io_at(&manifest_path))?;
        if expected != on_disk && writable {
            store.write_manifest()?;
            let mut store = store;
            store
                .warnings
                .push("manifest was behind the journal and has been rebuilt".into());
            return Ok(store);
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn state(&self) -> &ProjectState {
        &self.state
    }

    /// Recovery notes produced while loading.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn is_writable(&self) -> bool {
        self.lock.is_some()
    }

    fn writable(&self) -> Result<()> {
        if self.is_writable() {
            Ok(())
        } else {
            Err(HevalError::Invalid("project was opened read-only".into()))
        }
    }

    fn write_manifest(&self) -> Result<()> {
        write_atomic(&self.root.join(MANIFEST), &Manifest::of(&self.state).to_bytes())
    }

    pub fn providers_path(&self) -> PathBuf {
        self.root.join("providers.toml")
    }

    pub fn run_dir(&self, run_id: &RunId) -> PathBuf {
        self.root.join("runs").join(run_id.as_str())
    }

    /// Prompt templates from `prompts/`, falling back to the built-in text
    /// for a missing file.
    pub fn prompt_templates(&self) -> Result<PromptTemplates> {
        let mut t = PromptTemplates::default();
        let read = |rel: &str, into: &mut String| -> Result<()> {
            let path = self.root.join(rel);
            match fs::read_to_string(&path) {
                Ok(text) => *into = text,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(io_at(&path)(e)),
            }
            Ok(())
        };
        read("prompts/evaluation.txt", &mut t.evaluation)?;
        read("prompts/format.txt", &mut t.format_instructions)?;
        Ok(t)
    }

    /// Adds a task from image files. Returns the new task index.
    pub fn ingest_task(&mut self, scenario: &str, files: &[PathBuf], captions: &[String]) -> Result<u32> {
        let mut images = Vec::new();
        for file in files {
            images.push((file.clone(), fs::read(file).map_err(io_at(file))?));
        }
        self.ingest_images(scenario, images, captions)
    }

    /// Adds a task from in-memory images, each named for error messages.
    pub fn ingest_images(
        &mut self,
        scenario: &str,
        images: Vec<(PathBuf, Vec<u8>)>,
        captions: &[String],
    ) -> Result<u32> {
        self.writable()?;
        let index = self.state.next_task_index();
        if scenario.trim().is_empty() {
            return Err(heval_core::Error::EmptyScenario.into());
        }
        if images.is_empty() {
            return Err(heval_core::Error::EmptyTask(index).into());
        }
        let mut screenshots = Vec::new();
        for (i, (file, bytes)) in images.into_iter().enumerate() {
            let caption = captions.get(i).filter(|c| !c.is_empty()).cloned();
            let shot = Screenshot::new(i as u32 + 1, bytes, caption).map_err(|_| HevalError::Media {
                file: file.clone(),
                message: "not a PNG or JPEG image".into(),
            })?;
            screenshots.push(shot);
        }
        let task = UserTask {
            task_index: index,
            scenario_text: scenario.trim().to_string(),
            screenshots,
        };
        let dir = self.root.join("tasks").join(index.to_string()).join("screens");
        fs::create_dir_all(&dir).map_err(io_at(&dir))?;
        for shot in &task.screenshots {
            let path = dir.join(format!("{}.{}", shot.content_hash, shot.media_kind.extension()));
            write_atomic(&path, &shot.image_bytes)?;
        }
        let mut stored = task.clone();
        for shot in &mut stored.screenshots {
            shot.image_bytes.clear();
        }
        self.state.add_task(stored)?;
        self.write_manifest()?;
        Ok(index)
    }

    /// The task with screenshot bytes read back from disk.
    pub fn task_with_images(&self, index: u32) -> Result<UserTask> {
        let mut task = self
            .state
            .task(index)
            .cloned()
            .ok_or_else(|| HevalError::Invalid(format!("no task {index}")))?;
        let dir = self.root.join("tasks").join(index.to_string()).join("screens");
        for shot in &mut task.screenshots {
            let path = dir.join(format!("{}.{}", shot.content_hash, shot.media_kind.extension()));
            shot.image_bytes = fs::read(&path).map_err(io_at(&path))?;
        }
        Ok(task)
    }

    /// Reserves the next `run{NNN}-{label}` id by creating its directory.
    pub fn allocate_run_id(&mut self, label: &str) -> Result<RunId> {
        self.writable()?;
        let label = slugify(label);
        let mut n = self.state.runs.len() + 1;
        loop {
            let id = RunId::new(format!("run{n:03}-{label}"));
            let dir = self.run_dir(&id);
            if self.state.run(id.as_str()).is_none() && !dir.exists() {
                fs::create_dir_all(&dir).map_err(io_at(&dir))?;
                return Ok(id);
            }
            n += 1;
        }
    }

    /// Records a finished (or failed) run with its parser warnings.
    pub fn add_run(&mut self, run: EvaluationRun, warnings: &[ParseWarning]) -> Result<()> {
        self.writable()?;
        let dir = self.run_dir(&run.run_id);
        fs::create_dir_all(&dir).map_err(io_at(&dir))?;
        self.state.add_run(run.clone())?;
        let written = write_atomic(&dir.join("issues.json"), &pretty(&run))
            .and_then(|_| write_atomic(&dir.join("warnings.json"), &pretty(&warnings)))
            .and_then(|_| self.write_manifest());
        if written.is_err() {
            self.state.runs.pop();
        }
        written
    }

    /// Stores a proposal batch, skipping proposals already on record.
    pub fn add_proposals(&mut self, batch: ProposalBatch) -> Result<usize> {
        self.writable()?;
        let kept = self.state.add_proposal_batch(batch);
        if kept > 0 {
            self.write_inputs()?;
        }
        Ok(kept)
    }

    pub fn set_link_candidates(&mut self, matches: Vec<MasterMatch>) -> Result<()> {
        self.writable()?;
        self.state.set_link_candidates(matches);
        self.write_inputs()
    }

    fn write_inputs(&self) -> Result<()> {
        let base = self.state.base();
        write_atomic(&self.root.join(PROPOSALS), &pretty(&base.proposal_batches))?;
        write_atomic(&self.root.join(LINKS), &pretty(&base.link_candidates))?;
        self.write_manifest()
    }

    /// Validates, journals and applies one decision. With `expected_version`
    /// set, the call fails unless the master version still matches.
    pub fn apply(
        &mut self,
        actor: &str,
        kind: DecisionKind,
        expected_version: Option<u64>,
    ) -> Result<TriageDecision> {
        self.writable()?;
        if let Some(expected) = expected_version {
            if expected != self.state.master_version {
                return Err(HevalError::VersionMismatch {
                    expected,
                    actual: self.state.master_version,
                });
            }
        }
        let decision = self.state.decide(actor, Utc::now(), kind);
        self.state.validate(&decision)?;
        self.append_journal(&decision)?;
        self.state.apply(decision.clone())?;
        self.write_manifest()?;
        Ok(decision)
    }

    fn append_journal(&self, decision: &TriageDecision) -> Result<()> {
        let path = self.root.join(JOURNAL);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_at(&path))?;
        let line = serde_json::to_string(decision).map_err(json_at(&path))? + "\n";
        f.write_all(line.as_bytes()).map_err(io_at(&path))?;
        f.sync_data().map_err(io_at(&path))
    }

    /// Applies every decision in a JSON array file, stopping at the first
    /// rejection. Returns how many were applied.
    pub fn apply_file(&mut self, path: &Path, default_actor: &str) -> Result<usize> {
        let inputs: Vec<DecisionInput> = read_json(path)?;
        let mut n = 0;
        for input in inputs {
            let actor = input.actor.as_deref().unwrap_or(default_actor);
            self.apply(actor, input.kind, None).map_err(|e| {
                HevalError::Invalid(format!("{}: decision {} rejected: {e}", path.display(), n + 1))
            })?;
            n += 1;
        }
        Ok(n)
    }

    /// Parser warnings recorded for a run.
    pub fn run_warnings(&self, run_id: &RunId) -> Result<Vec<ParseWarning>> {
        read_json_or_default(&self.run_dir(run_id).join("warnings.json"))
    }
}
