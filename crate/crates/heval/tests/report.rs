mod common;

use heval::report::{export_csv, render, svg, Block, Format, ReportData, ReportSpec, Section, LONG_CSV_HEADER};
use heval::store::Store;
use heval::HevalError;
use heval_core::dedup::DEFAULT_AUTO_ACCEPT;
use proptest::prelude::*;

fn spec(format: Format) -> ReportSpec {
    ReportSpec {
        sections: Section::ALL.to_vec(),
        format,
        include_severity0: false,
    }
}

#[test]
fn rendering_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let root = common::full(tmp.path());
    let a = Store::open_read_only(&root).unwrap();
    let b = Store::open_read_only(&root).unwrap();
    for format in [Format::Markdown, Format::Html, Format::Json, Format::Csv] {
        let x = render(&ReportData::new(a.state(), DEFAULT_AUTO_ACCEPT), &spec(format)).unwrap();
        let y = render(&ReportData::new(b.state(), DEFAULT_AUTO_ACCEPT), &spec(format)).unwrap();
        assert_eq!(x, y, "{format:?}");
    }
}

#[test]
fn sections_must_be_chosen() {
    let tmp = tempfile::tempdir().unwrap();
    let root = common::full(tmp.path());
    let store = Store::open_read_only(&root).unwrap();
    let data = ReportData::new(store.state(), DEFAULT_AUTO_ACCEPT);
    let mut s = spec(Format::Markdown);
    s.sections.clear();
    let err = render(&data, &s).unwrap_err();
    assert_eq!(err.code(), "parameter");
}

#[test]
fn coverage_sections_need_a_master_set() {
    let tmp = tempfile::tempdir().unwrap();
    let root = common::ingested(tmp.path());
    assert_eq!(common::cli_in(&root, &["evaluate", "--provider", "mock"]), 0);
    let store = Store::open_read_only(&root).unwrap();
    let data = ReportData::new(store.state(), DEFAULT_AUTO_ACCEPT);
    match render(&data, &spec(Format::Json)) {
        Err(HevalError::SectionUnavailable { section, .. }) => assert_eq!(section, "overview"),
        other => panic!("{other:?}"),
    }
    let mut open = spec(Format::Json);
    open.sections = vec![Section::OpenTriage];
    render(&data, &open).unwrap();
    assert_ne!(common::cli_in(&root, &["report"]), 0);
}

#[test]
fn long_csv_parses_back() {
    let tmp = tempfile::tempdir().unwrap();
    let root = common::full(tmp.path());
    let store = Store::open_read_only(&root).unwrap();
    let data = ReportData::new(store.state(), DEFAULT_AUTO_ACCEPT);
    let doc = render(&data, &spec(Format::Csv)).unwrap().document;
    let mut r = csv::Reader::from_reader(doc.as_slice());
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), LONG_CSV_HEADER);
    let mut stats = 0;
    for rec in r.records() {
        let rec = rec.unwrap();
        if rec[4].is_empty() {
            continue;
        }
        let m: u64 = rec[4].parse().unwrap();
        let d: u64 = rec[5].parse().unwrap();
        let p: u64 = rec[6].parse().unwrap();
        assert_eq!(p, ((m as f64 / d as f64) * 100.0 + 0.5).floor() as u64);
        assert_eq!(&rec[7], format!("{p}% ({m}/{d})"));
        stats += 1;
    }
    assert!(stats > 10);
    let overall: Vec<_> = csv::Reader::from_reader(doc.as_slice())
        .records()
        .map(Result::unwrap)
        .filter(|r| &r[0] == "overview" && &r[3] == "Coverage")
        .map(|r| r[7].to_string())
        .collect();
    assert_eq!(overall, ["83% (5/6)", "50% (3/6)", "83% (5/6)", "50% (3/6)"]);
}

#[test]
fn severity_zero_row_is_opt_in() {
    let tmp = tempfile::tempdir().unwrap();
    let root = common::full(tmp.path());
    let store = Store::open_read_only(&root).unwrap();
    let data = ReportData::new(store.state(), DEFAULT_AUTO_ACCEPT);
    let rows = |include: bool| {
        let text = String::from_utf8(export_csv(&data, Section::PerSeverity, include).unwrap()).unwrap();
        text.lines().filter(|l| !l.starts_with("\"Note")).count() - 1
    };
    assert_eq!(rows(true), rows(false) + 1);
    let with_zero = String::from_utf8(export_csv(&data, Section::PerSeverity, true).unwrap()).unwrap();
    assert!(with_zero.contains("\"0% (0/1)\",\"100% (1/1)\""), "{with_zero}");
}

#[test]
fn json_tables_carry_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let root = common::full(tmp.path());
    let store = Store::open_read_only(&root).unwrap();
    let data = ReportData::new(store.state(), DEFAULT_AUTO_ACCEPT);
    let doc = render(&data, &spec(Format::Json)).unwrap().document;
    let v: serde_json::Value = serde_json::from_slice(&doc).unwrap();
    let overview = v["report"]
        .as_array()
        .unwrap()
        .iter()
        .find(|b| b["table"] == "overview")
        .unwrap();
    let cell = &overview["rows"][0]["cells"][0];
    assert_eq!((cell["matched"].as_u64(), cell["denominator"].as_u64(), cell["percent"].as_u64()), (Some(5), Some(6), Some(83)));
    let blocks = data.blocks(&spec(Format::Json)).unwrap();
    let tables = blocks.iter().filter(|b| matches!(b, Block::Table(_))).count();
    assert_eq!(v["report"].as_array().unwrap().iter().filter(|b| b.get("table").is_some()).count(), tables);
}

#[test]
fn markdown_links_chart_files_and_html_inlines_them() {
    let tmp = tempfile::tempdir().unwrap();
    let root = common::full(tmp.path());
    let store = Store::open_read_only(&root).unwrap();
    let data = ReportData::new(store.state(), DEFAULT_AUTO_ACCEPT);
    let md = render(&data, &spec(Format::Markdown)).unwrap();
    let text = String::from_utf8(md.document).unwrap();
    assert!(!md.charts.is_empty());
    for (file, body) in &md.charts {
        assert!(text.contains(&format!("({file})")), "{file}");
        assert!(body.starts_with("<svg"));
    }
    let html = String::from_utf8(render(&data, &spec(Format::Html)).unwrap().document).unwrap();
    assert_eq!(html.matches("<svg").count(), md.charts.len());
}

proptest! {
    #[test]
    fn svg_bars_carry_their_numbers(values in prop::collection::vec((0usize..50, 1usize..50), 1..6)) {
        let values: Vec<Option<(usize, usize)>> = values.into_iter().map(|(m, d)| Some((m.min(d), d))).collect();
        let chart = heval::report::Chart {
            id: "c".into(),
            title: "t".into(),
            kind: heval::report::ChartKind::Bar,
            categories: (0..values.len()).map(|i| i.to_string()).collect(),
            series: vec![("s".into(), values.clone())],
        };
        let out = svg(&chart);
        prop_assert_eq!(out.matches("data-tick").count(), 11);
        for (m, d) in values.into_iter().flatten() {
            let needle = format!("data-matched=\"{}\" data-denominator=\"{}\"", m, d);
            prop_assert!(out.contains(&needle), "{}", needle);
        }
    }
}
