#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicBool, Ordering};

pub mod crash;

use heval::store::Store;
use heval_core::dedup::ProposalStatus;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/e2e")
}

static SUBPROCESS: AtomicBool = AtomicBool::new(false);

/// Routes later [`cli`] calls through the built binary with its output
/// captured.
pub fn capture_cli_output() {
    SUBPROCESS.store(true, Ordering::Relaxed);
}

pub fn cli(args: &[&str]) -> i32 {
    if SUBPROCESS.load(Ordering::Relaxed) {
        let out = Command::new(env!("CARGO_BIN_EXE_heval")).args(args).output().unwrap();
        return out.status.code().unwrap_or(-1);
    }
    heval::cli::run(std::iter::once("heval").chain(args.iter().copied()))
}

pub fn cli_in(project: &Path, args: &[&str]) -> i32 {
    let p = project.to_str().unwrap();
    let mut all = vec!["--project", p];
    all.extend_from_slice(args);
    cli(&all)
}

pub fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        std::fs::copy(e.path(), to.join(e.file_name())).unwrap();
    }
}

/// Project with both tasks ingested and the mock fixtures in place.
pub fn ingested(dir: &Path) -> PathBuf {
    let fx = fixtures();
    let root = dir.join("proj");
    assert_eq!(cli(&["init", "--name", "Data portal", root.to_str().unwrap()]), 0);
    copy_dir(&fx.join("mock"), &root.join("mock"));
    for (task, shots) in [(1, ["t1-1", "t1-2"]), (2, ["t2-1", "t2-2"])] {
        let scenario = fx.join(format!("scenario{task}.txt"));
        let imgs: Vec<String> = shots
            .iter()
            .map(|s| fx.join("screens").join(format!("{s}.png")).to_string_lossy().into_owned())
            .collect();
        let mut args = vec!["ingest", "--scenario-file", scenario.to_str().unwrap()];
        args.extend(imgs.iter().map(String::as_str));
        assert_eq!(cli_in(&root, &args), 0);
    }
    root
}

/// The full fixture project: one mock run, one human run, the master set
/// from decisions.json and the task 2 duplicate pair confirmed by
/// auto-accept.
pub fn full(dir: &Path) -> PathBuf {
    let root = decided(dir);
    assert_eq!(cli_in(&root, &["triage", "auto-accept"]), 0);
    root
}

/// Everything in [`full`] except the duplicate confirmation.
pub fn decided(dir: &Path) -> PathBuf {
    let fx = fixtures();
    let root = ingested(dir);
    assert_eq!(cli_in(&root, &["evaluate", "--provider", "mock"]), 0);
    assert_eq!(cli_in(&root, &["import-human", fx.join("human.json").to_str().unwrap()]), 0);
    assert_eq!(cli_in(&root, &["triage", "apply", fx.join("decisions.json").to_str().unwrap()]), 0);
    assert_eq!(cli_in(&root, &["dedup"]), 0);
    root
}

pub fn duplicate_pair_proposal(root: &Path) -> String {
    let store = Store::open_read_only(root).unwrap();
    let p = store
        .state()
        .proposals()
        .find(|p| {
            p.status == ProposalStatus::Proposed
                && p.group.iter().any(|i| i.as_str() == "run001-mock-t2-b2-001")
                && p.group.iter().any(|i| i.as_str() == "run001-mock-t2-b2-002")
        })
        .expect("the account-number pair is proposed");
    p.proposal_id.to_string()
}

pub fn copy_tree(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        let target = to.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            copy_tree(&e.path(), &target);
        } else {
            std::fs::copy(e.path(), target).unwrap();
        }
    }
}
