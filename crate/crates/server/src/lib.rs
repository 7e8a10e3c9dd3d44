//! `/v1` JSON API over the defender workflow.
//!
//! Each session has a single writer: steps and selections run on a blocking
//! thread while holding the session's mutex. Reads come from a snapshot
//! refreshed after every write, so they never wait on a running step.
//! Cancellation flips the session's token without taking the lock.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use riskcal_core::metrics::{scan_table, ScanKeys, DEFAULT_ENTRY_POINT_THRESHOLD};
use riskcal_core::workflow::{
    CollectionRef, DefenderSession, QiSelection, Redaction, RiskAcknowledgment, SessionView, Step,
    StepRequest, Workbench,
};
use riskcal_core::{CancelToken, RiskError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Value the `acknowledge` query parameter must carry for unredacted reports.
pub const ACKNOWLEDGMENT: &str = "i-understand-risk";

/// JSON error body: `{"error": {"code": ..., "message": ...}}`.
#[derive(Debug)]
pub struct ApiError(RiskError);

impl From<RiskError> for ApiError {
    fn from(e: RiskError) -> Self {
        ApiError(e)
    }
}

fn status_for(e: &RiskError) -> StatusCode {
    use RiskError::*;
    match e {
        UnknownSession(_) | UnknownDataset(_) | UnknownCollection(_) | UnknownProfile(_)
        | UnknownAttribute(_) => StatusCode::NOT_FOUND,
        StepOutOfOrder { .. } | NothingToReport | Cancelled => StatusCode::CONFLICT,
        InvalidParameter(_) | EmptySelection | InvalidAttributeName(_) | Json(_) => {
            StatusCode::BAD_REQUEST
        }
        EmptyResult | EmptyTable | EmptyCollection | NoSharedAttributes
        | InsufficientMembers(_) | ResultTooLarge { .. } | NotTabular(_) => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        NetworkFailure(_) => StatusCode::BAD_GATEWAY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_for(&self.0);
        if status.is_server_error() {
            log::error!("{}", self.0);
        }
        let body = json!({"error": {"code": self.0.code(), "message": self.0.to_string()}});
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct Snapshot {
    view: SessionView,
    masked: Option<String>,
    unmasked: Option<String>,
}

struct SessionSlot {
    writer: Mutex<DefenderSession>,
    snapshot: RwLock<Snapshot>,
    cancel: CancelToken,
}

impl SessionSlot {
    fn new(session: DefenderSession) -> Self {
        let cancel = session.cancel_token();
        let snapshot = RwLock::new(snapshot_of(&session));
        SessionSlot {
            writer: Mutex::new(session),
            snapshot,
            cancel,
        }
    }
}

fn snapshot_of(s: &DefenderSession) -> Snapshot {
    let report = |r| s.export_report(r).ok().map(|d| d.to_json());
    Snapshot {
        view: s.view(),
        masked: report(Redaction::Masked),
        unmasked: report(Redaction::Unmasked(RiskAcknowledgment::i_understand_risk())),
    }
}

pub struct AppState {
    workbench: Arc<Workbench>,
    history_dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Arc<SessionSlot>>>,
}

impl AppState {
    /// `history_dir`, when set, receives one `<session id>.jsonl` history
    /// file per session.
    pub fn new(workbench: Arc<Workbench>, history_dir: Option<PathBuf>) -> Self {
        AppState {
            workbench,
            history_dir,
            sessions: RwLock::new(HashMap::new()),
        }
    }

    fn slot(&self, id: &str) -> ApiResult<Arc<SessionSlot>> {
        self.sessions
            .read()
            .expect("session table lock")
            .get(id)
            .cloned()
            .ok_or_else(|| RiskError::UnknownSession(id.to_string()).into())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/qis", post(set_qis))
        .route("/sessions/{id}/steps/{step}", post(run_step))
        .route("/sessions/{id}/report", get(get_report))
        .route("/sessions/{id}/cancel", post(cancel))
        .route("/collection", get(get_collection))
        .route("/datasets/{id}/risk", get(dataset_risk))
        .with_state(state);
    Router::new().nest("/v1", api)
}

/// Router with a static UI bundle served from `ui_dir` outside `/v1`.
pub fn router_with_ui(state: Arc<AppState>, ui_dir: PathBuf) -> Router {
    router(state).fallback_service(tower_http::services::ServeDir::new(ui_dir))
}

pub async fn serve(app: Router, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await
}

/// Runs `f` on the blocking pool with the session's writer lock held, then
/// refreshes the read snapshot.
async fn with_writer<T, F>(slot: Arc<SessionSlot>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&mut DefenderSession) -> riskcal_core::Result<T> + Send + 'static,
{
    tokio::task::spawn_blocking(move || {
        let mut session = slot.writer.lock().expect("session writer lock");
        let out = f(&mut session);
        *slot.snapshot.write().expect("snapshot lock") = snapshot_of(&session);
        out
    })
    .await
    .map_err(|e| ApiError(RiskError::InvalidParameter(format!("worker failed: {e}"))))?
    .map_err(ApiError)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSessionBody {
    collection: Option<CollectionRef>,
}

#[derive(Serialize)]
struct Created {
    session_id: String,
    session: SessionView,
}

fn parse_body<T: for<'de> Deserialize<'de> + Default>(body: &str) -> ApiResult<T> {
    if body.trim().is_empty() {
        return Ok(T::default());
    }
    serde_json::from_str(body)
        .map_err(|e| ApiError(RiskError::InvalidParameter(format!("request body: {e}"))))
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    body: String,
) -> ApiResult<(StatusCode, Json<Created>)> {
    let body: CreateSessionBody = parse_body(&body)?;
    let history_dir = state.history_dir.clone();
    let current = state.workbench.clone();
    let session = tokio::task::spawn_blocking(move || -> riskcal_core::Result<DefenderSession> {
        let workbench = match body.collection {
            Some(r) if &r != current.reference() => {
                Arc::new(Workbench::open(r, current.dictionary().clone())?)
            }
            _ => current,
        };
        let session = DefenderSession::new(workbench);
        match history_dir {
            Some(dir) => {
                let path = dir.join(format!("{}.jsonl", session.id()));
                session.with_history_log(&path)
            }
            None => Ok(session),
        }
    })
    .await
    .map_err(|e| ApiError(RiskError::InvalidParameter(format!("worker failed: {e}"))))??;
    let id = session.id().to_string();
    let view = session.view();
    state
        .sessions
        .write()
        .expect("session table lock")
        .insert(id.clone(), Arc::new(SessionSlot::new(session)));
    Ok((
        StatusCode::CREATED,
        Json(Created {
            session_id: id,
            session: view,
        }),
    ))
}

async fn get_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionView>> {
    let slot = state.slot(&id)?;
    let view = slot.snapshot.read().expect("snapshot lock").view.clone();
    Ok(Json(view))
}

async fn set_qis(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: String,
) -> ApiResult<Json<Value>> {
    let selection: QiSelection = serde_json::from_str(&body).map_err(|e| {
        ApiError(RiskError::InvalidParameter(format!(
            "expected {{\"profile\": name}} or {{\"qis\": [..]}}: {e}"
        )))
    })?;
    let slot = state.slot(&id)?;
    let qis = with_writer(slot, move |s| s.set_quasi_identifiers(selection)).await?;
    Ok(Json(json!({ "selected_qis": qis })))
}

async fn run_step(
    State(state): State<Arc<AppState>>,
    Path((id, step)): Path<(String, String)>,
    body: String,
) -> ApiResult<Response> {
    let step: Step = step.parse()?;
    let params: Value = if body.trim().is_empty() {
        Value::Null
    } else {
        serde_json::from_str(&body)
            .map_err(|e| ApiError(RiskError::InvalidParameter(format!("request body: {e}"))))?
    };
    let slot = state.slot(&id)?;
    let request = StepRequest::new(step, params);
    let out = with_writer(slot, move |s| s.run_step(&request)).await?;
    Ok(json_text(out.to_json()))
}

fn json_text(text: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], text).into_response()
}

#[derive(Debug, Deserialize)]
struct ReportQuery {
    redact: Option<bool>,
    acknowledge: Option<String>,
}

async fn get_report(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<ReportQuery>,
) -> ApiResult<Response> {
    let slot = state.slot(&id)?;
    let redact = q.redact.unwrap_or(true);
    if !redact && q.acknowledge.as_deref() != Some(ACKNOWLEDGMENT) {
        return Err(RiskError::InvalidParameter(format!(
            "unredacted reports require acknowledge={ACKNOWLEDGMENT}"
        ))
        .into());
    }
    let snapshot = slot.snapshot.read().expect("snapshot lock");
    let doc = if redact {
        &snapshot.masked
    } else {
        &snapshot.unmasked
    };
    doc.clone()
        .map(json_text)
        .ok_or(ApiError(RiskError::NothingToReport))
}

async fn cancel(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<StatusCode> {
    state.slot(&id)?.cancel.cancel();
    Ok(StatusCode::ACCEPTED)
}

async fn get_collection(State(state): State<Arc<AppState>>) -> Json<Value> {
    let wb = &state.workbench;
    Json(json!({
        "reference": wb.reference(),
        "funnel": wb.manifest().funnel_report(),
        "datasets": wb.collection(),
    }))
}

#[derive(Debug, Deserialize)]
struct RiskQuery {
    keys: Option<String>,
    threshold: Option<usize>,
    subsets: Option<bool>,
}

async fn dataset_risk(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<RiskQuery>,
) -> ApiResult<Json<Value>> {
    let keys: ScanKeys = q.keys.as_deref().unwrap_or("auto").parse()?;
    let threshold = q.threshold.unwrap_or(DEFAULT_ENTRY_POINT_THRESHOLD);
    let subsets = q.subsets.unwrap_or(false);
    let wb = state.workbench.clone();
    let report = tokio::task::spawn_blocking(move || {
        let table = wb.table(&id)?;
        scan_table(&id, table, &keys, threshold, subsets, wb.dictionary())
    })
    .await
    .map_err(|e| ApiError(RiskError::InvalidParameter(format!("worker failed: {e}"))))??;
    Ok(Json(serde_json::to_value(report).map_err(RiskError::from)?))
}
