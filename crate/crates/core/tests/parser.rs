use heval_core::model::{CompletionResult, FinishReason};
use heval_core::parse::{parse_issues, render_labeled, ParsedIssue, TaskContext, WarningKind};
use heval_core::{Batch, HeuristicId, Severity};
use proptest::prelude::*;

const WORDS: &[&str] = &[
    "button", "label", "menu", "the", "login", "screen", "unclear", "icon", "missing", "error",
    "message", "tap", "back", "setup", "wifi", "slow", "hidden", "field", "users", "cannot",
    "find", "save", "toggle", "color", "contrast",
];

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS), 2..12).prop_map(|w| {
        let mut s = w.join(" ");
        s[..1].make_ascii_uppercase();
        s.push('.');
        s
    })
}

fn issue(batch: Batch, screens: u32) -> impl Strategy<Value = ParsedIssue> {
    let ids: Vec<u8> = batch.heuristics().map(|h| h.id.get()).collect();
    (
        prop::sample::select(ids),
        sentence(),
        sentence(),
        0i64..=4,
        prop::option::of(sentence()),
        prop::collection::btree_set(1..=screens, 1..=screens as usize),
    )
        .prop_map(|(h, description, rationale, sev, sev_rationale, refs)| ParsedIssue {
            heuristic_id: Some(HeuristicId::new(h.into()).unwrap()),
            description,
            rationale,
            severity: Some(Severity::new(sev).unwrap()),
            severity_rationale: sev_rationale,
            screen_refs: refs.into_iter().collect(),
            task_index: 3,
        })
}

fn batch() -> impl Strategy<Value = Batch> {
    prop_oneof![Just(Batch::FirstFive), Just(Batch::SecondFive)]
}

fn ctx() -> TaskContext {
    TaskContext {
        task_index: 3,
        screen_count: 6,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn labeled_output_round_trips(
        (batch, issues) in batch().prop_flat_map(|b| (Just(b), prop::collection::vec(issue(b, 6), 1..8)))
    ) {
        let text = render_labeled(&issues);
        let out = parse_issues(&CompletionResult::stop(text), batch, ctx());
        prop_assert_eq!(&out.issues, &issues);
        prop_assert_eq!(out.block_warning_count(), 0);
        prop_assert_eq!(out.block_count, issues.len());
    }
}

fn noisy_line() -> impl Strategy<Value = String> {
    prop_oneof![
        sentence(),
        Just(String::new()),
        Just("Heuristic: Visibility of system status".to_string()),
        Just("Heuristic: Gestalt closure".to_string()),
        Just("## Error prevention".to_string()),
        Just("**Consistency and standards**".to_string()),
        sentence().prop_map(|s| format!("Issue: {s}")),
        sentence().prop_map(|s| format!("Rationale: {s}")),
        (0i64..9).prop_map(|n| format!("Severity: {n}")),
        Just("Screens: 1-3".to_string()),
        Just("Screens: all".to_string()),
        sentence().prop_map(|s| format!("- {s} (Severity 3)")),
        "[a-zA-Z0-9 :,.!?*#()-]{0,60}",
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// Every block ends up as an issue or a block-level warning.
    #[test]
    fn no_block_is_dropped_silently(
        lines in prop::collection::vec(noisy_line(), 0..40),
        batch in batch(),
        length_limited in any::<bool>(),
    ) {
        let mut raw = CompletionResult::stop(lines.join("\n"));
        if length_limited {
            raw.finish_reason = FinishReason::LengthLimit;
        }
        let out = parse_issues(&raw, batch, ctx());
        prop_assert_eq!(out.block_count, out.issues.len() + out.block_warning_count());
        if length_limited {
            prop_assert!(out.truncated);
            prop_assert_eq!(out.count(WarningKind::TruncatedTail), 1);
        }
        for issue in &out.issues {
            prop_assert!(issue.screen_refs.iter().all(|s| (1..=6).contains(s)));
            prop_assert!(issue.heuristic_id.is_none_or(|h| batch.contains(h)));
        }
    }
}

#[test]
fn truncated_example_is_flagged() {
    // A second-five answer cut off partway through its third heuristic.
    let text = "Heuristic: Recognition rather than recall
Issue: Device codes must be remembered between screens.
Rationale: Memory load.
Severity: 2
Screens: 3, 4

Heuristic: Flexibility and efficiency of use
Issue: No shortcut to repeat the last setup.
Rationale: Slows expert users.
Severity: 1
Screens: 5

Aesthetic and minimalist design: The \"Tour req";
    let raw = CompletionResult::stop(text);
    let out = parse_issues(&raw, Batch::SecondFive, ctx());
    assert!(out.truncated);
    let ids: Vec<u8> = out.issues.iter().filter_map(|i| i.heuristic_id).map(|h| h.get()).collect();
    assert_eq!(&ids[..2], &[6, 7]);
    assert_eq!(out.count(WarningKind::TruncatedTail), 1);
    // Help with errors and documentation never appear.
    assert_eq!(out.count(WarningKind::NoIssuesForHeuristic), 2);
}

#[test]
fn minimalistic_spelling_is_accepted() {
    let text = "Heuristic: Aesthetic and minimalistic design\nIssue: Cluttered home.\nRationale: Noise.\nSeverity: 2\nScreens: 1";
    let out = parse_issues(&CompletionResult::stop(text), Batch::SecondFive, ctx());
    assert_eq!(out.issues.len(), 1);
    assert_eq!(out.issues[0].heuristic_id, HeuristicId::new(8).ok());
}
