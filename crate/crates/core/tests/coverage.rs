use std::collections::{BTreeMap, BTreeSet};

use heval_core::coverage::{
    aggregate_union, coverage, format_cell, per_heuristic, per_severity, per_task_trend,
    percent_round_half_up, severity_zero_hits, CoverageScope, MatchReport,
};
use heval_core::model::{IssueId, MasterEntry, MasterId, MasterSet};
use heval_core::reliability::mean_and_sample_sd;
use heval_core::{Error, HeuristicId, Severity};
use proptest::prelude::*;

fn entry(n: usize, heuristic: u8, severity: u8, task: u32) -> MasterEntry {
    MasterEntry {
        master_id: MasterId(format!("M{n:03}")),
        heuristic_id: HeuristicId::new(heuristic.into()).unwrap(),
        coded_severity: Severity::new(severity.into()).unwrap(),
        canonical_description: String::new(),
        contributing_issue_ids: vec![],
        across_screen: false,
        task_index: task,
    }
}

fn master_strategy() -> impl Strategy<Value = MasterSet> {
    prop::collection::vec((1u8..=10, 0u8..=4, 1u32..=3), 1..40).prop_map(|rows| MasterSet {
        entries: rows
            .into_iter()
            .enumerate()
            .map(|(n, (h, s, t))| entry(n, h, s, t))
            .collect(),
    })
}

/// A report linking `picks` (indices into the master, repeats allowed).
fn report(tag: &str, master: &MasterSet, picks: &[usize]) -> MatchReport {
    let links = picks
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let e = &master.entries[p % master.entries.len()];
            (IssueId(format!("{tag}-{k}")), e.master_id.clone())
        })
        .collect::<BTreeMap<_, _>>();
    MatchReport {
        report_id: tag.into(),
        links,
        ..MatchReport::default()
    }
}

fn picks() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0usize..100, 0..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn coverage_properties(master in master_strategy(), a in picks(), b in picks()) {
        let nonzero = master.entries.iter().filter(|e| e.coded_severity.is_problem()).count();
        let ra = report("a", &master, &a);
        let rb = report("b", &master, &b);
        let Ok(ca) = coverage(&ra, &master) else {
            prop_assert_eq!(nonzero, 0);
            prop_assert_eq!(coverage(&ra, &master), Err(Error::EmptyDenominator));
            return Ok(());
        };
        prop_assert!((0.0..=1.0).contains(&ca.ratio));
        prop_assert_eq!(ca.denominator, nonzero);

        // Independent count of distinct non-zero entries hit.
        let hit: BTreeSet<&MasterId> = ra.links.values().collect();
        let expected = master
            .entries
            .iter()
            .filter(|e| e.coded_severity.is_problem() && hit.contains(&e.master_id))
            .count();
        prop_assert_eq!(ca.matched, expected);

        // Linking an already-hit entry again changes nothing.
        if let Some((_, m)) = ra.links.iter().next() {
            let mut again = ra.clone();
            again.links.insert(IssueId("extra".into()), m.clone());
            prop_assert_eq!(coverage(&again, &master).unwrap(), ca);
        }

        // Severity-0 links never move coverage.
        let mut with_zero = ra.clone();
        for (k, e) in master.entries.iter().enumerate().filter(|(_, e)| !e.coded_severity.is_problem()) {
            with_zero.links.insert(IssueId(format!("zero-{k}")), e.master_id.clone());
        }
        prop_assert_eq!(coverage(&with_zero, &master).unwrap(), ca);

        // The union covers at least as much as each member.
        let cb = coverage(&rb, &master).unwrap();
        let cu = coverage(&aggregate_union(&[&ra, &rb]).unwrap(), &master).unwrap();
        prop_assert!(cu.matched >= ca.matched.max(cb.matched));
        prop_assert!(cu.matched <= ca.matched + cb.matched);

        // Per-heuristic rows partition the non-zero entries.
        let rows = per_heuristic(&ra, &master).unwrap();
        prop_assert_eq!(rows.iter().map(|r| r.denominator).sum::<usize>(), ca.denominator);
        prop_assert_eq!(rows.iter().map(|r| r.matched).sum::<usize>(), ca.matched);

        // Per-severity rows include level 0 and sum to every entry.
        let sev = per_severity(&[(&ra, &master)]).unwrap();
        prop_assert_eq!(sev.iter().map(|r| r.denominator).sum::<usize>(), master.entries.len());
        let zero_hits = severity_zero_hits(&ra, &master).unwrap();
        let zero_row = sev.iter().find(|r| r.scope == CoverageScope::PerSeverity(Severity::ZERO));
        prop_assert_eq!(zero_row.map_or(0, |r| r.matched), zero_hits);

        if let Ok(trend) = per_task_trend(&ra, &master) {
            prop_assert!(trend.slope.is_finite());
            prop_assert_eq!(trend.per_task.iter().map(|r| r.denominator).sum::<usize>(), nonzero);
        }
    }

    #[test]
    fn percent_matches_float_rounding(m in 0usize..2000, extra in 0usize..2000) {
        let d = m + extra;
        prop_assume!(d > 0);
        let exact = 100.0 * m as f64 / d as f64;
        let p = percent_round_half_up(m, d);
        prop_assert!((f64::from(p) - exact).abs() <= 0.5 + 1e-9);
        prop_assert!(f64::from(p) - exact < 0.5 + 1e-9 && exact - f64::from(p) < 0.5);
    }
}

#[test]
fn published_percentages() {
    let cases = [
        (97, 133, 73),
        (87, 113, 77),
        (76, 133, 57),
        (71, 113, 63),
        (24, 133, 18),
        (18, 21, 86),
        (110, 142, 77),
        (171, 182, 94),
        (93, 133, 70),
    ];
    for (m, d, p) in cases {
        assert_eq!(percent_round_half_up(m, d), p, "{m}/{d}");
    }
    assert_eq!(format_cell(93, 133), "70% (93/133)");
}

#[test]
fn sample_standard_deviation() {
    // 0.94, 0.92, 0.95: mean 0.936667, variance (1 + 25 + 16) / 90000 / 2.
    let (mean, sd) = mean_and_sample_sd(&[0.94, 0.92, 0.95]);
    assert!((mean - 0.936_666_666_666_666_7).abs() < 1e-9);
    assert!((sd - (42.0f64 / 180_000.0).sqrt()).abs() < 1e-9);
}
