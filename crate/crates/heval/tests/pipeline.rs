mod common;

use std::fs;

use heval::config::ProviderDescriptor;
use heval::gateway::Gateway;
use heval::pipeline::{auto_accept, dedup, evaluate, DedupOptions, EvaluateOptions, AUTO_ACCEPT_ACTOR};
use heval::store::Store;
use heval_core::dedup::{MatchStatus, ProposalStatus, SimilarityMethod};
use heval_core::model::RunStatus;
use heval_core::parse::WarningKind;
use heval_core::prompt::FLOOR_CLAUSE;

fn mock(root: &std::path::Path) -> Gateway {
    Gateway::for_descriptor(ProviderDescriptor::mock("mock", "mock"), root)
}

#[test]
fn evaluate_subset_without_floor() {
    let tmp = tempfile::tempdir().unwrap();
    let root = common::ingested(tmp.path());
    let mut store = Store::open(&root).unwrap();
    let opts = EvaluateOptions {
        tasks: vec![2],
        at_least_two_floor: false,
        system_message: Some("You are a usability expert.".into()),
        ..EvaluateOptions::default()
    };
    let s = evaluate(&mut store, &mock(&root), &opts).unwrap();
    assert_eq!((s.exchanges, s.issues, s.status), (2, 4, RunStatus::Complete));
    let lines = heval::transcript::read_transcript(&store.run_dir(&s.run_id).join("transcripts.jsonl")).unwrap();
    assert!(lines.iter().all(|l| l.task_index == 2));
    assert!(lines.iter().all(|l| !l.request.user_text.contains(FLOOR_CLAUSE)));
    assert_eq!(lines[0].request.system_text.as_deref(), Some("You are a usability expert."));
    let run = store.state().runs.last().unwrap();
    assert!(!run.settings.at_least_two_floor);
    assert!(run.settings.prompt_template_hash.is_some());

    let s = evaluate(&mut store, &mock(&root), &EvaluateOptions::default()).unwrap();
    let lines = heval::transcript::read_transcript(&store.run_dir(&s.run_id).join("transcripts.jsonl")).unwrap();
    assert!(lines.iter().all(|l| l.request.user_text.contains(FLOOR_CLAUSE)));
    assert!(lines.iter().all(|l| l.request.system_text.is_none()));
}

#[test]
fn truncated_batches_and_warnings_are_kept() {
    let tmp = tempfile::tempdir().unwrap();
    let root = common::ingested(tmp.path());
    fs::write(root.join("mock/task1-second.toml"), "finish = \"length\"\n").unwrap();
    fs::write(
        root.join("mock/task1-second.txt"),
        "some loose remark\n\nHeuristic: Help and documentation\nIssue: The help link opens an empty page\nSeverity: 1\n\nHeuristic: Help users recognize, diagnose and recover from errors\nIssue: The error banner cuts off mid",
    )
    .unwrap();
    let mut store = Store::open(&root).unwrap();
    let s = evaluate(&mut store, &mock(&root), &EvaluateOptions::default()).unwrap();
    assert_eq!(s.truncated_batches, 1);
    let warnings = store.run_warnings(&s.run_id).unwrap();
    assert!(warnings.iter().any(|w| w.kind == WarningKind::TruncatedTail));
    assert!(warnings.iter().any(|w| w.kind == WarningKind::UnlabeledBlock && w.span == "some loose remark"));
    let run = store.state().runs.last().unwrap();
    assert!(run.transcripts.iter().any(|t| t.truncated));
}

#[test]
fn dedup_stays_inside_runs_and_heuristics() {
    let tmp = tempfile::tempdir().unwrap();
    let root = common::decided(tmp.path());
    let store = Store::open_read_only(&root).unwrap();
    let state = store.state();
    for p in state.proposals() {
        let members: Vec<_> = p.group.iter().map(|id| state.issue(id).unwrap()).collect();
        assert!(members.windows(2).all(|w| w[0].source.run_id == w[1].source.run_id));
        assert!(members.windows(2).all(|w| w[0].heuristic_id == w[1].heuristic_id));
        assert!(p.mean_pairwise_score >= 0.35);
        assert_eq!(p.method, SimilarityMethod::TokenOverlap);
    }
    assert!(state.proposal_batches.iter().all(|b| b.constrain_same_heuristic && !b.stopword_hash.is_empty()));
    let pair = common::duplicate_pair_proposal(&root);
    assert!(!pair.is_empty());
    drop(store);

    let mut store = Store::open(&root).unwrap();
    let again = dedup(&mut store, DedupOptions::default(), None).unwrap();
    assert_eq!(again.proposals_added, 0);
}

#[test]
fn link_candidates_cover_unlinked_issues() {
    let tmp = tempfile::tempdir().unwrap();
    let root = common::decided(tmp.path());
    let store = Store::open_read_only(&root).unwrap();
    let state = store.state();
    for c in &state.link_candidates {
        let issue = state.issue(&c.issue_id).unwrap();
        assert!(state.master_link(issue).is_none());
        assert!(state.master.get(&c.master_id).is_some());
        match c.status {
            MatchStatus::AutoAccepted => assert!(c.score >= 0.85),
            MatchStatus::NeedsReview => assert!(c.score >= 0.35 && c.score < 0.85),
            MatchStatus::Unmatched => assert!(c.score < 0.35),
        }
    }
}

#[test]
fn auto_accept_confirms_once() {
    let tmp = tempfile::tempdir().unwrap();
    let root = common::decided(tmp.path());
    let mut store = Store::open(&root).unwrap();
    let before = store.state().master_version;
    let s = auto_accept(&mut store, 0.5).unwrap();
    assert!(s.groups_confirmed >= 1, "{s:?}");
    let v = store.state().master_version;
    assert_eq!(v, before + (s.groups_confirmed + s.links_confirmed) as u64);
    assert!(store.state().journal[before as usize..].iter().all(|d| d.actor == AUTO_ACCEPT_ACTOR));
    let pair_confirmed = store
        .state()
        .proposals()
        .any(|p| p.status == ProposalStatus::Confirmed && p.group.iter().any(|i| i.as_str() == "run001-mock-t2-b2-002"));
    assert!(pair_confirmed);
    let s = auto_accept(&mut store, 0.5).unwrap();
    assert_eq!((s.groups_confirmed, s.links_confirmed), (0, 0));
    assert_eq!(store.state().master_version, v);
}

#[test]
fn judge_decides_pairs() {
    let tmp = tempfile::tempdir().unwrap();
    let root = common::ingested(tmp.path());
    let mut store = Store::open(&root).unwrap();
    evaluate(&mut store, &mock(&root), &EvaluateOptions::default()).unwrap();
    let judge_dir = tmp.path().join("judge");
    fs::create_dir_all(&judge_dir).unwrap();
    fs::write(judge_dir.join("judge.txt"), "Yes, both describe the same problem.").unwrap();
    let judge = Gateway::for_descriptor(ProviderDescriptor::mock("judge", &judge_dir), tmp.path());
    let s = dedup(&mut store, DedupOptions::default(), Some(&judge)).unwrap();
    assert!(s.proposals_added >= 1);
    assert!(store.state().proposals().all(|p| p.method == SimilarityMethod::LlmJudge));
    assert!(!judge.limiter().history().is_empty());

    let tmp2 = tempfile::tempdir().unwrap();
    let root2 = common::ingested(tmp2.path());
    let mut store2 = Store::open(&root2).unwrap();
    evaluate(&mut store2, &mock(&root2), &EvaluateOptions::default()).unwrap();
    let no = Gateway::for_descriptor(ProviderDescriptor::mock("judge", tmp2.path().join("empty")), tmp2.path());
    let s = dedup(&mut store2, DedupOptions::default(), Some(&no)).unwrap();
    assert_eq!(s.proposals_added, 0);
}

#[test]
fn human_import_ids_and_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let root = common::ingested(tmp.path());
    let mut store = Store::open(&root).unwrap();
    let run = heval::import::import_human(&mut store, &common::fixtures().join("human.json")).unwrap();
    assert_eq!(run.run_id.as_str(), "run001-expert-1");
    assert_eq!(run.issues[1].screen_refs, [1, 2]);
    assert_eq!(run.issues[1].heuristic_id.map(|h| h.get()), Some(1));
    assert_eq!(run.issues[3].issue_id.as_str(), "run001-expert-1-004");
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"evaluator": "e", "issues": [{"heuristic": 2, "description": "x", "task": 7}]}"#).unwrap();
    assert!(heval::import::import_human(&mut store, &bad).is_err());
    fs::write(&bad, r#"{"evaluator": "e", "issues": [], "extra": 1}"#).unwrap();
    assert!(heval::import::import_human(&mut store, &bad).is_err());
    assert_eq!(store.state().runs.len(), 1);
}
