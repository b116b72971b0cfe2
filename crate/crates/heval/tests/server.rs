mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use http_body_util::BodyExt;
use heval::server::{router, AppState, UI_ACTOR};
use heval::store::Store;
use heval_core::dedup::DEFAULT_AUTO_ACCEPT;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Api {
    app: Arc<AppState>,
    root: std::path::PathBuf,
    _tmp: tempfile::TempDir,
}

impl Api {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = common::decided(tmp.path());
        let app = AppState::new(Store::open(&root).unwrap(), DEFAULT_AUTO_ACCEPT);
        Self { app, root, _tmp: tmp }
    }

    async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let req = Request::builder().method(method).uri(uri);
        let req = match body {
            Some(b) => req
                .header("content-type", "application/json")
                .body(Body::from(b.to_string())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = router(self.app.clone()).oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let v = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
        (status, v)
    }

    async fn get(&self, uri: &str) -> Value {
        let (s, v) = self.call(Method::GET, uri, None).await;
        assert_eq!(s, StatusCode::OK, "{uri}: {v}");
        v
    }

    async fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        self.call(Method::POST, uri, Some(body)).await
    }

    fn journal_len(&self) -> usize {
        std::fs::read_to_string(self.root.join("journal.jsonl")).unwrap().lines().count()
    }

    async fn pair_proposal(&self) -> Value {
        let v = self.get("/api/proposals").await;
        v["proposals"]
            .as_array()
            .unwrap()
            .iter()
            .find(|p| p["issues"].as_array().unwrap().iter().any(|i| i["issue_id"] == "run001-mock-t2-b2-002"))
            .cloned()
            .expect("pair proposal is open")
    }
}

#[tokio::test]
async fn project_summary() {
    let api = Api::new();
    let v = api.get("/api/project").await;
    assert_eq!(v["name"], "Data portal");
    assert_eq!(v["master_version"], 10);
    assert_eq!(v["tasks"].as_array().unwrap().len(), 2);
    assert_eq!(v["runs"][0]["issue_count"], 9);
    assert_eq!(v["master_entries"], 7);
}

#[tokio::test]
async fn proposals_are_sorted_by_score() {
    let api = Api::new();
    let v = api.get("/api/proposals").await;
    let scores: Vec<f64> = v["proposals"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["mean_pairwise_score"].as_f64().unwrap())
        .collect();
    assert!(!scores.is_empty());
    assert!(scores.windows(2).all(|w| w[0] >= w[1]), "{scores:?}");
}

#[tokio::test]
async fn confirming_a_group_adds_k_minus_one_duplicates() {
    let api = Api::new();
    let before = api.get("/api/coverage").await["duplicate_count"].as_u64().unwrap();
    let p = api.pair_proposal().await;
    let k = p["issues"].as_array().unwrap().len() as u64;
    let id = p["proposal_id"].as_str().unwrap();
    let (s, v) = api.post(&format!("/api/proposals/{id}/confirm"), json!({"expected_version": 10})).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["master_version"], 11);
    assert_eq!(v["decision"]["actor"], UI_ACTOR);
    let after = api.get("/api/coverage").await["duplicate_count"].as_u64().unwrap();
    assert_eq!(after, before + k - 1);
    let dups = api.get("/api/issues?filter=duplicates").await;
    assert_eq!(dups["issues"].as_array().unwrap().len() as u64, k - 1);
    assert_eq!(dups["issues"][0]["master_id"], "M007");
}

#[tokio::test]
async fn severity_zero_shrinks_the_denominator() {
    let api = Api::new();
    let den = |v: &Value| v["runs"][0]["detail"]["coverage"]["denominator"].as_u64().unwrap();
    let before = api.get("/api/coverage?scope=overall").await;
    assert_eq!(den(&before), 6);
    let (s, _) = api.post("/api/master/M002/severity", json!({"rating": 0})).await;
    assert_eq!(s, StatusCode::OK);
    let after = api.get("/api/coverage").await;
    assert_eq!(den(&after), den(&before) - 1);
    assert_eq!(after["severity_zero_entries"], 2);
}

#[tokio::test]
async fn second_confirm_conflicts_without_journaling() {
    let api = Api::new();
    let id = api.pair_proposal().await["proposal_id"].as_str().unwrap().to_string();
    let uri = format!("/api/proposals/{id}/confirm");
    assert_eq!(api.post(&uri, json!({})).await.0, StatusCode::OK);
    let n = api.journal_len();
    let (s, v) = api.post(&uri, json!({})).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "conflict");
    let (s, _) = api.post(&format!("/api/proposals/{id}/reject"), json!({})).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(api.journal_len(), n);
}

#[tokio::test]
async fn stale_references_are_not_found() {
    let api = Api::new();
    let n = api.journal_len();
    let (s, v) = api.post("/api/master/M999/severity", json!({"rating": 2})).await;
    assert_eq!(s, StatusCode::NOT_FOUND, "{v}");
    let (s, _) = api.post("/api/proposals/nope/confirm", json!({})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = api.post("/api/master/M001/links", json!({"issue_id": "ghost"})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(api.journal_len(), n);
}

#[tokio::test]
async fn expected_version_must_match() {
    let api = Api::new();
    let n = api.journal_len();
    let (s, v) = api
        .post("/api/master/M001/across-screen", json!({"across_screen": true, "expected_version": 9}))
        .await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "version_mismatch");
    assert_eq!(api.journal_len(), n);
}

#[tokio::test]
async fn bad_requests() {
    let api = Api::new();
    assert_eq!(api.post("/api/master", json!({"issue_id": 3})).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(api.post("/api/master/M001/severity", json!({"rating": 7})).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(api.call(Method::GET, "/api/issues?filter=odd", None).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(api.call(Method::GET, "/api/coverage?scope=odd", None).await.0, StatusCode::BAD_REQUEST);
    let (s, v) = api.call(Method::GET, "/api/nothing", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "not_found");
}

#[tokio::test]
async fn promote_code_and_link() {
    let api = Api::new();
    let unlinked = api.get("/api/issues?filter=unlinked").await;
    let ids: Vec<&str> = unlinked["issues"].as_array().unwrap().iter().map(|i| i["issue_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["run001-mock-t1-b1-003", "run001-mock-t1-b2-002", "run001-mock-t2-b1-002", "run001-mock-t2-b2-002"]);
    let (s, v) = api
        .post("/api/master", json!({"issue_id": "run001-mock-t1-b1-003", "coded_severity": 1, "heuristic_id": 4}))
        .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let master = api.get("/api/master").await;
    let entry = master["entries"].as_array().unwrap().last().unwrap().clone();
    assert_eq!(entry["master_id"], "M008");
    assert_eq!(entry["heuristic_id"], 4);
    let (s, _) = api.post("/api/master/M008/links", json!({"issue_id": "run001-mock-t2-b1-002"})).await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = api.post("/api/issues/run001-mock-t1-b2-002/code", json!({"heuristic_id": 5})).await;
    assert_eq!(s, StatusCode::OK);
    let all = api.get("/api/issues").await;
    let coded = all["issues"].as_array().unwrap().iter().find(|i| i["issue_id"] == "run001-mock-t1-b2-002").unwrap();
    assert_eq!(coded["heuristic_id"], 5);
    assert_eq!(coded["reported_heuristic_id"], 10);
    let linked = api.get("/api/issues?filter=linked").await;
    assert_eq!(linked["issues"].as_array().unwrap().len(), 11);
    let (s, _) = api.post("/api/master/M008/heuristic", json!({"heuristic_id": 2})).await;
    assert_eq!(s, StatusCode::OK);
    let reread = Store::open_read_only(&api.root).unwrap();
    assert_eq!(reread.state().master_version, 14);
    assert!(reread.state().journal[10..].iter().all(|d| d.actor == UI_ACTOR));
}

#[tokio::test]
async fn coverage_scopes_and_reliability() {
    let api = Api::new();
    for scope in ["overall", "heuristic", "severity", "task"] {
        let v = api.get(&format!("/api/coverage?scope={scope}")).await;
        assert_eq!(v["scope"], scope);
        assert_eq!(v["runs"].as_array().unwrap().len(), 2);
    }
    let v = api.get("/api/reliability").await;
    assert_eq!(v["providers"][0]["provider"], "mock");
    let (s, _) = api.call(Method::GET, "/", None).await;
    assert_eq!(s, StatusCode::OK);
}
