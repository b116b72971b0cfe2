use heval_core::model::{Screenshot, UserTask};
use heval_core::prompt::{build_evaluation_prompts, PromptOptions, PromptTemplates};
use heval_core::{Batch, Error};
use proptest::prelude::*;

const PNG: &[u8] = b"\x89PNG\r\n\x1a\n0000";
const JPEG: &[u8] = b"\xff\xd8\xff\xe0jfif";

fn task(scenario: &str) -> UserTask {
    UserTask {
        task_index: 1,
        scenario_text: scenario.into(),
        screenshots: vec![
            Screenshot::new(1, PNG.to_vec(), None).unwrap(),
            Screenshot::new(2, JPEG.to_vec(), Some("second".into())).unwrap(),
        ],
    }
}

fn expected_opening(scenario: &str, which: &str) -> String {
    format!(
        "[User scenario: {scenario}] Given the screenshots provided, perform a heuristic evaluation using the {which} of Nielsen's 10 heuristics. (The screenshots are given in the order that they show up in the application, so consider the interaction across the screens.) For each heuristic, identify at least 2 problems. Identify all heuristic issues, provide a rationale for why this is an issue, give a severity rating (0-4) and reason for the severity rating. Be as specific as possible about where the heuristics fail."
    )
}

#[test]
fn default_wording_is_verbatim() {
    let scenario = "You want to set up your new Smart Plug and connect it to Wi-Fi.";
    let [first, second] = build_evaluation_prompts(&task(scenario), &PromptOptions::default()).unwrap();
    assert!(first.user_text.starts_with(&expected_opening(scenario, "first 5")));
    assert!(second.user_text.starts_with(&expected_opening(scenario, "second 5")));
    assert_eq!(first.batch, Batch::FirstFive);
    assert_eq!(second.batch, Batch::SecondFive);
    assert!(first.user_text.contains("\n1. Visibility of system status\n"));
    assert!(first.user_text.contains("\n5. Error prevention\n"));
    assert!(!first.user_text.contains("6. Recognition rather than recall"));
    assert!(second.user_text.contains("\n8. Aesthetic and minimalist design\n"));
    assert!(second.user_text.contains("10. Help and documentation"));
    assert_eq!(first.system_text, None);
    let indices: Vec<u32> = first.attachments.iter().map(|s| s.screen_index).collect();
    assert_eq!(indices, [1, 2]);
    assert_eq!(first.attachments, task(scenario).screenshots);
}

#[test]
fn floor_clause_is_optional() {
    let options = PromptOptions {
        at_least_two_floor: false,
        ..PromptOptions::default()
    };
    let [first, _] = build_evaluation_prompts(&task("x"), &options).unwrap();
    assert!(!first.user_text.contains("at least 2"));
    assert!(first.user_text.contains("across the screens.) Identify all heuristic issues"));
}

#[test]
fn scenario_cannot_inject_placeholders() {
    let [first, _] = build_evaluation_prompts(&task("see {batch_selector}"), &PromptOptions::default()).unwrap();
    assert!(first.user_text.starts_with("[User scenario: see {batch_selector}]"));
}

#[test]
fn empty_inputs_are_rejected() {
    assert_eq!(
        build_evaluation_prompts(&task("  "), &PromptOptions::default()).unwrap_err(),
        Error::EmptyScenario
    );
    let mut t = task("x");
    t.screenshots.clear();
    assert_eq!(
        build_evaluation_prompts(&t, &PromptOptions::default()).unwrap_err(),
        Error::EmptyTask(1)
    );
}

#[test]
fn template_hash_tracks_wording() {
    let default = PromptTemplates::default();
    let mut edited = default.clone();
    edited.evaluation.push_str("\nBe terse.");
    assert!(default.is_default());
    assert_ne!(default.content_hash(), edited.content_hash());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn prompts_are_deterministic(scenario in "[A-Za-z0-9 ,.'{}-]{1,80}", floor in any::<bool>()) {
        prop_assume!(!scenario.trim().is_empty());
        let options = PromptOptions { at_least_two_floor: floor, ..PromptOptions::default() };
        let a = build_evaluation_prompts(&task(&scenario), &options).unwrap();
        let b = build_evaluation_prompts(&task(&scenario), &options).unwrap();
        prop_assert_eq!(a[0].content_hash(), b[0].content_hash());
        prop_assert_eq!(&a[1].user_text, &b[1].user_text);
        prop_assert_ne!(a[0].content_hash(), a[1].content_hash());
        let preamble = format!("[User scenario: {}]", scenario);
        prop_assert!(a[0].user_text.starts_with(&preamble));
    }
}
