//! Local HTTP/JSON service behind the triage UI.
//!
//! Reads see the state as of the request. Every mutating request becomes
//! one journaled decision through the project's single writer. A mutation
//! may carry `expected_version`; if the master version has moved on, the
//! request fails with 409 and nothing is journaled.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use heval_core::analysis::{analyze, AnalysisSnapshot};
use heval_core::dedup::{MatchStatus, ProposalStatus};
use heval_core::model::{IssueId, MasterId, ProposalId, UsabilityIssue};
use heval_core::triage::{CodeTarget, DecisionKind, ProjectState};
use heval_core::{HeuristicId, Severity};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::HevalError;
use crate::reliability::summarize_reliability;
use crate::store::Store;

pub const UI_ACTOR: &str = "triage-ui";

pub struct AppState {
    pub store: Mutex<Store>,
    pub auto_accept: f64,
}

impl AppState {
    pub fn new(store: Store, auto_accept: f64) -> Arc<Self> {
        Arc::new(Self {
            store: Mutex::new(store),
            auto_accept,
        })
    }
}

pub struct ApiError(StatusCode, String, String);

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError(StatusCode::BAD_REQUEST, "bad_request".into(), message.into())
    }

    fn not_found(message: impl Into<String>) -> Self {
        ApiError(StatusCode::NOT_FOUND, "not_found".into(), message.into())
    }
}

impl From<HevalError> for ApiError {
    fn from(e: HevalError) -> Self {
        use heval_core::Error as C;
        let status = match &e {
            HevalError::VersionMismatch { .. } | HevalError::Core(C::Conflict(_)) => StatusCode::CONFLICT,
            HevalError::Core(C::StaleDecision(_)) | HevalError::Core(C::UnknownMasterEntry(_)) => {
                StatusCode::NOT_FOUND
            }
            HevalError::Core(_) | HevalError::Invalid(_) | HevalError::SectionUnavailable { .. } => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.code().into(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({"error": self.1, "message": self.2}))).into_response()
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

fn body<T: DeserializeOwned + Default>(bytes: &Bytes) -> Result<T, ApiError> {
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Ok(T::default());
    }
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

fn required<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

fn decide(app: &AppState, kind: DecisionKind, expected: Option<u64>) -> ApiResult {
    let mut store = app.store.lock().unwrap();
    let decision = store.apply(UI_ACTOR, kind, expected)?;
    Ok(Json(json!({
        "decision": decision,
        "master_version": store.state().master_version,
    })))
}

fn issue_json(state: &ProjectState, issue: &UsabilityIssue) -> Value {
    let candidate = state.link_candidates.iter().find(|c| c.issue_id == issue.issue_id);
    json!({
        "issue_id": issue.issue_id,
        "run_id": issue.source.run_id,
        "evaluator": issue.source.evaluator,
        "task_index": issue.task_index,
        "screen_refs": issue.screen_refs,
        "heuristic_id": state.effective_heuristic(issue),
        "reported_heuristic_id": issue.heuristic_id,
        "description": issue.description,
        "rationale": issue.rationale,
        "reported_severity": issue.reported_severity,
        "duplicate_of": issue.duplicate_of,
        "master_id": state.master_link(issue),
        "link_candidate": candidate,
    })
}

async fn index() -> Html<&'static str> {
    Html(concat!(
        "<!DOCTYPE html>\n<html lang=\"en\"><head><meta charset=\"utf-8\"><title>heval triage</title></head>\n",
        "<body><h1>heval triage service</h1>\n",
        "<p>The JSON API is under <code>/api/</code>. Start with <a href=\"/api/project\">/api/project</a>.</p>\n",
        "</body></html>\n"
    ))
}

async fn project(State(app): State<Arc<AppState>>) -> ApiResult {
    let store = app.store.lock().unwrap();
    let s = store.state();
    let snap = analyze(s);
    Ok(Json(json!({
        "app_id": s.app_id,
        "name": s.name,
        "schema_version": s.schema_version,
        "master_version": s.master_version,
        "tasks": s.tasks.iter().map(|t| json!({
            "task_index": t.task_index,
            "scenario_text": t.scenario_text,
            "screens": t.screenshots.len(),
        })).collect::<Vec<_>>(),
        "runs": s.runs.iter().map(|r| json!({
            "run_id": r.run_id,
            "evaluator": r.evaluator,
            "status": r.status,
            "timestamp": r.timestamp,
            "issue_count": r.issues.len(),
        })).collect::<Vec<_>>(),
        "master_entries": s.master.len(),
        "open_triage": snap.open_triage,
    })))
}

async fn proposals(State(app): State<Arc<AppState>>) -> ApiResult {
    let store = app.store.lock().unwrap();
    let s = store.state();
    let mut open: Vec<_> = s.proposals().filter(|p| p.status == ProposalStatus::Proposed).collect();
    open.sort_by(|a, b| {
        b.mean_pairwise_score
            .total_cmp(&a.mean_pairwise_score)
            .then_with(|| a.proposal_id.cmp(&b.proposal_id))
    });
    let items: Vec<Value> = open
        .iter()
        .map(|p| {
            json!({
                "proposal_id": p.proposal_id,
                "canonical_candidate": p.canonical_candidate,
                "mean_pairwise_score": p.mean_pairwise_score,
                "method": p.method,
                "issues": p.group.iter().filter_map(|id| s.issue(id)).map(|i| issue_json(s, i)).collect::<Vec<_>>(),
            })
        })
        .collect();
    Ok(Json(json!({"master_version": s.master_version, "proposals": items})))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfirmBody {
    canonical: Option<IssueId>,
    expected_version: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct VersionOnly {
    expected_version: Option<u64>,
}

async fn confirm(State(app): State<Arc<AppState>>, Path(id): Path<String>, bytes: Bytes) -> ApiResult {
    let b: ConfirmBody = body(&bytes)?;
    let kind = DecisionKind::ConfirmGroup {
        proposal_id: ProposalId::new(id),
        canonical: b.canonical,
    };
    decide(&app, kind, b.expected_version)
}

async fn reject(State(app): State<Arc<AppState>>, Path(id): Path<String>, bytes: Bytes) -> ApiResult {
    let b: VersionOnly = body(&bytes)?;
    decide(
        &app,
        DecisionKind::RejectGroup {
            proposal_id: ProposalId::new(id),
        },
        b.expected_version,
    )
}

#[derive(Debug, Deserialize)]
struct IssueQuery {
    filter: Option<String>,
}

async fn issues(State(app): State<Arc<AppState>>, Query(q): Query<IssueQuery>) -> ApiResult {
    let store = app.store.lock().unwrap();
    let s = store.state();
    let filter = q.filter.as_deref().unwrap_or("all");
    let keep: Box<dyn Fn(&UsabilityIssue) -> bool> = match filter {
        "all" => Box::new(|_| true),
        "unlinked" => Box::new(|i| i.duplicate_of.is_none() && s.master_link(i).is_none()),
        "linked" => Box::new(|i| s.master_link(i).is_some()),
        "duplicates" => Box::new(|i| i.duplicate_of.is_some()),
        "needs_review" => Box::new(|i| {
            s.master_link(i).is_none()
                && i.duplicate_of.is_none()
                && s
                    .link_candidates
                    .iter()
                    .any(|c| c.issue_id == i.issue_id && c.status == MatchStatus::NeedsReview)
        }),
        other => {
            return Err(ApiError::bad_request(format!(
                "unknown filter {other:?}; use all, unlinked, linked, duplicates or needs_review"
            )))
        }
    };
    let items: Vec<Value> = s.issues().filter(|i| keep(i)).map(|i| issue_json(s, i)).collect();
    Ok(Json(json!({"master_version": s.master_version, "filter": filter, "issues": items})))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CodeBody {
    heuristic_id: HeuristicId,
    expected_version: Option<u64>,
}

async fn code_issue(State(app): State<Arc<AppState>>, Path(id): Path<String>, bytes: Bytes) -> ApiResult {
    let b: CodeBody = required(&bytes)?;
    decide(
        &app,
        DecisionKind::CodeHeuristic {
            target: CodeTarget::Issue(IssueId::new(id)),
            heuristic_id: b.heuristic_id,
        },
        b.expected_version,
    )
}

async fn master(State(app): State<Arc<AppState>>) -> ApiResult {
    let store = app.store.lock().unwrap();
    let s = store.state();
    Ok(Json(json!({"master_version": s.master_version, "entries": s.master.entries})))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PromoteBody {
    issue_id: IssueId,
    coded_severity: Severity,
    heuristic_id: Option<HeuristicId>,
    #[serde(default)]
    across_screen: bool,
    description: Option<String>,
    expected_version: Option<u64>,
}

async fn promote(State(app): State<Arc<AppState>>, bytes: Bytes) -> ApiResult {
    let b: PromoteBody = required(&bytes)?;
    decide(
        &app,
        DecisionKind::PromoteToMaster {
            issue_id: b.issue_id,
            coded_severity: b.coded_severity,
            heuristic_id: b.heuristic_id,
            across_screen: b.across_screen,
            description: b.description,
        },
        b.expected_version,
    )
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeverityBody {
    rating: Severity,
    expected_version: Option<u64>,
}

async fn master_severity(State(app): State<Arc<AppState>>, Path(id): Path<String>, bytes: Bytes) -> ApiResult {
    let b: SeverityBody = required(&bytes)?;
    decide(
        &app,
        DecisionKind::CodeSeverity {
            master_id: MasterId::new(id),
            rating: b.rating,
        },
        b.expected_version,
    )
}

async fn master_heuristic(State(app): State<Arc<AppState>>, Path(id): Path<String>, bytes: Bytes) -> ApiResult {
    let b: CodeBody = required(&bytes)?;
    decide(
        &app,
        DecisionKind::CodeHeuristic {
            target: CodeTarget::Master(MasterId::new(id)),
            heuristic_id: b.heuristic_id,
        },
        b.expected_version,
    )
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AcrossBody {
    across_screen: bool,
    expected_version: Option<u64>,
}

async fn master_across(State(app): State<Arc<AppState>>, Path(id): Path<String>, bytes: Bytes) -> ApiResult {
    let b: AcrossBody = required(&bytes)?;
    decide(
        &app,
        DecisionKind::MarkAcrossScreen {
            master_id: MasterId::new(id),
            across_screen: b.across_screen,
        },
        b.expected_version,
    )
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkBody {
    issue_id: IssueId,
    expected_version: Option<u64>,
}

async fn master_link(State(app): State<Arc<AppState>>, Path(id): Path<String>, bytes: Bytes) -> ApiResult {
    let b: LinkBody = required(&bytes)?;
    decide(
        &app,
        DecisionKind::ConfirmMasterLink {
            issue_id: b.issue_id,
            master_id: MasterId::new(id),
        },
        b.expected_version,
    )
}

#[derive(Debug, Deserialize)]
struct CoverageQuery {
    scope: Option<String>,
}

/// The coverage view of one snapshot for a scope.
pub fn coverage_view(snap: &AnalysisSnapshot, scope: &str) -> Option<Value> {
    if !matches!(scope, "overall" | "heuristic" | "severity" | "task") {
        return None;
    }
    let runs: Vec<Value> = snap
        .runs
        .iter()
        .map(|r| {
            let detail = match scope {
                "overall" => json!({"coverage": r.coverage, "severity_zero_hits": r.severity_zero_hits}),
                "heuristic" => json!({"rows": r.per_heuristic}),
                "severity" => json!({"rows": r.per_severity}),
                _ => json!({"trend": r.per_task}),
            };
            json!({
                "run_id": r.run_id,
                "evaluator": r.evaluator,
                "status": r.status,
                "issue_count": r.issue_count,
                "unmatched": r.unmatched,
                "duplicate_count": r.duplicates.duplicate_count,
                "detail": detail,
            })
        })
        .collect();
    let unions: Vec<Value> = snap
        .unions
        .iter()
        .map(|u| {
            let detail = match scope {
                "overall" => json!({"coverage": u.coverage, "severity_zero_hits": u.severity_zero_hits, "mean_individual": u.mean_individual}),
                "heuristic" => json!({"rows": u.per_heuristic}),
                "severity" => json!({"rows": u.per_severity}),
                _ => json!({"trend": u.per_task}),
            };
            json!({"kind": u.kind, "run_ids": u.run_ids, "detail": detail})
        })
        .collect();
    Some(json!({
        "scope": scope,
        "master_version": snap.master_version,
        "master_entries": snap.master_entries,
        "nonzero_entries": snap.nonzero_entries,
        "severity_zero_entries": snap.severity_zero_entries,
        "across_screen_entries": snap.across_screen_entries,
        "duplicate_count": snap.runs.iter().map(|r| r.duplicates.duplicate_count).sum::<usize>(),
        "runs": runs,
        "unions": unions,
        "open_triage": snap.open_triage,
    }))
}

async fn coverage(State(app): State<Arc<AppState>>, Query(q): Query<CoverageQuery>) -> ApiResult {
    let snap = analyze(app.store.lock().unwrap().state());
    let scope = q.scope.as_deref().unwrap_or("overall");
    coverage_view(&snap, scope).map(Json).ok_or_else(|| {
        ApiError::bad_request(format!(
            "unknown scope {scope:?}; use overall, heuristic, severity or task"
        ))
    })
}

async fn reliability(State(app): State<Arc<AppState>>) -> ApiResult {
    let store = app.store.lock().unwrap();
    let s = store.state();
    Ok(Json(json!({
        "master_version": s.master_version,
        "auto_accept": app.auto_accept,
        "providers": summarize_reliability(s, app.auto_accept),
    })))
}

async fn fallback() -> ApiError {
    ApiError::not_found("no such endpoint")
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/", get(index))
        .route("/api/project", get(project))
        .route("/api/proposals", get(proposals))
        .route("/api/proposals/{id}/confirm", post(confirm))
        .route("/api/proposals/{id}/reject", post(reject))
        .route("/api/issues", get(issues))
        .route("/api/issues/{id}/code", post(code_issue))
        .route("/api/master", get(master).post(promote))
        .route("/api/master/{id}/severity", post(master_severity))
        .route("/api/master/{id}/heuristic", post(master_heuristic))
        .route("/api/master/{id}/across-screen", post(master_across))
        .route("/api/master/{id}/links", post(master_link))
        .route("/api/coverage", get(coverage))
        .route("/api/reliability", get(reliability))
        .fallback(fallback)
        .with_state(app)
}

/// Serves until Ctrl-C. `ready` is called with the bound address once the
/// listener is up.
pub fn serve(app: Arc<AppState>, addr: SocketAddr, ready: impl FnOnce(SocketAddr)) -> crate::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| HevalError::Invalid(format!("cannot start runtime: {e}")))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| HevalError::Invalid(format!("cannot bind {addr}: {e}")))?;
        let local = listener
            .local_addr()
            .map_err(|e| HevalError::Invalid(format!("cannot read bound address: {e}")))?;
        ready(local);
        axum::serve(listener, router(app))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| HevalError::Invalid(format!("server error: {e}")))
    })
}
