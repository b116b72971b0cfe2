//! Randomized decision sequences followed by a simulated crash.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use heval::store::{Manifest, Store, JOURNAL, MANIFEST};
use heval_core::analysis::analyze;
use heval_core::model::{IssueId, MasterId};
use heval_core::triage::{CodeTarget, DecisionKind};
use heval_core::{HeuristicId, Severity};
use proptest::prelude::*;

/// Project with runs, proposals and link candidates but no decisions.
pub fn template() -> &'static Path {
    static DIR: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    let (_, root) = DIR.get_or_init(|| {
        let tmp = tempfile::tempdir().unwrap();
        let fx = super::fixtures();
        let root = super::ingested(tmp.path());
        assert_eq!(super::cli_in(&root, &["evaluate", "--provider", "mock"]), 0);
        assert_eq!(super::cli_in(&root, &["import-human", fx.join("human.json").to_str().unwrap()]), 0);
        assert_eq!(super::cli_in(&root, &["dedup"]), 0);
        (tmp, root)
    });
    root
}

#[derive(Debug, Clone)]
pub enum Op {
    Promote(usize, i64),
    Link(usize, usize),
    Severity(usize, i64),
    Heuristic(usize, i64),
    AcrossScreen(usize, bool),
    Confirm(usize),
    Reject(usize),
}

pub fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (0..13usize, 0..5i64).prop_map(|(i, s)| Op::Promote(i, s)),
        2 => (0..13usize, 0..8usize).prop_map(|(i, m)| Op::Link(i, m)),
        1 => (0..8usize, 0..5i64).prop_map(|(m, s)| Op::Severity(m, s)),
        1 => (0..13usize, 1..11i64).prop_map(|(i, h)| Op::Heuristic(i, h)),
        1 => (0..8usize, any::<bool>()).prop_map(|(m, b)| Op::AcrossScreen(m, b)),
        1 => (0..6usize).prop_map(Op::Confirm),
        1 => (0..6usize).prop_map(Op::Reject),
    ]
}

#[derive(Debug, Clone, Copy)]
pub enum Crash {
    None,
    TornTail,
    StaleManifest,
}

fn to_kind(op: &Op, issues: &[IssueId], proposals: &[String]) -> Option<DecisionKind> {
    let master = |m: usize| MasterId::new(format!("M{:03}", m + 1));
    let sev = |s: i64| Severity::new(s).unwrap();
    Some(match *op {
        Op::Promote(i, s) => DecisionKind::PromoteToMaster {
            issue_id: issues[i % issues.len()].clone(),
            coded_severity: sev(s),
            heuristic_id: None,
            across_screen: false,
            description: None,
        },
        Op::Link(i, m) => DecisionKind::ConfirmMasterLink {
            issue_id: issues[i % issues.len()].clone(),
            master_id: master(m),
        },
        Op::Severity(m, s) => DecisionKind::CodeSeverity {
            master_id: master(m),
            rating: sev(s),
        },
        Op::Heuristic(i, h) => DecisionKind::CodeHeuristic {
            target: CodeTarget::Issue(issues[i % issues.len()].clone()),
            heuristic_id: HeuristicId::new(h).unwrap(),
        },
        Op::AcrossScreen(m, b) => DecisionKind::MarkAcrossScreen {
            master_id: master(m),
            across_screen: b,
        },
        Op::Confirm(p) => DecisionKind::ConfirmGroup {
            proposal_id: proposals.get(p)?.as_str().into(),
            canonical: None,
        },
        Op::Reject(p) => DecisionKind::RejectGroup {
            proposal_id: proposals.get(p)?.as_str().into(),
        },
    })
}

pub fn run_sequence(ops: &[Op], crash: Crash, cut: usize) -> Result<(), TestCaseError> {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("p");
    super::copy_tree(template(), &root);
    let mut store = Store::open(&root).unwrap();
    let issues: Vec<IssueId> = store.state().issues().map(|i| i.issue_id.clone()).collect();
    let proposals: Vec<String> = store.state().proposals().map(|p| p.proposal_id.to_string()).collect();
    let mut manifests = vec![fs::read(root.join(MANIFEST)).unwrap()];
    for op in ops {
        let Some(kind) = to_kind(op, &issues, &proposals) else { continue };
        let journal_before = fs::read(root.join(JOURNAL)).unwrap();
        match store.apply("prop", kind, None) {
            Ok(_) => manifests.push(fs::read(root.join(MANIFEST)).unwrap()),
            Err(_) => prop_assert_eq!(fs::read(root.join(JOURNAL)).unwrap(), journal_before),
        }
    }
    let expected = store.state().clone();
    prop_assert_eq!(expected.master_version as usize, manifests.len() - 1);
    drop(store);

    match crash {
        Crash::None => {}
        Crash::TornTail => {
            let line = r#"{"decision_id":999,"actor":"prop","timestamp":"2024-01-01T00:00:00Z","kind":{"kind":"RejectGroup","payload""#;
            let mut j = fs::read(root.join(JOURNAL)).unwrap();
            j.extend_from_slice(&line.as_bytes()[..cut % line.len() + 1]);
            fs::write(root.join(JOURNAL), j).unwrap();
        }
        Crash::StaleManifest => {
            let old = &manifests[cut % manifests.len()];
            fs::write(root.join(MANIFEST), old).unwrap();
        }
    }

    let reader = Store::open_read_only(&root).unwrap();
    prop_assert_eq!(reader.state(), &expected);
    drop(reader);

    let store = Store::open(&root).unwrap();
    prop_assert_eq!(store.state(), &expected);
    prop_assert_eq!(analyze(store.state()), analyze(&expected));
    let healed = Manifest::of(&expected).to_bytes();
    prop_assert_eq!(fs::read(root.join(MANIFEST)).unwrap(), healed);
    let quarantined = fs::read_dir(&root)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("journal.quarantine-"))
        .count();
    match crash {
        Crash::TornTail => {
            prop_assert_eq!(quarantined, 1);
            prop_assert!(store.warnings().iter().any(|w| w.contains("quarantine")));
        }
        Crash::StaleManifest => prop_assert_eq!(quarantined, 0),
        Crash::None => prop_assert!(store.warnings().is_empty(), "{:?}", store.warnings()),
    }
    drop(store);
    let again = Store::open(&root).unwrap();
    prop_assert!(again.warnings().is_empty(), "{:?}", again.warnings());
    prop_assert_eq!(again.state(), &expected);
    Ok(())
}

