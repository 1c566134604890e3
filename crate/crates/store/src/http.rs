//! JSON-over-HTTP API.
//!
//! Handlers run service calls on the blocking pool; the service's own lock
//! serializes mutations.

use std::sync::Arc;

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post, put};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use curate_core::verify::DEFAULT_TOP_K;

use crate::error::StoreError;
use crate::service::{CurationService, DocumentUpload, ExportFormat, Phase};

pub const ACTOR_HEADER: &str = "x-actor";
pub const DEFAULT_ACTOR: &str = "anonymous";

#[derive(Clone)]
struct AppState {
    service: Arc<CurationService>,
    token: Option<Arc<str>>,
}

/// A JSON error body `{"error": code, "message": text}`.
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        use StoreError::*;
        let status = match &e {
            ProjectNotFound(_) | BatchNotFound(_) | RecordNotFound(_) => StatusCode::NOT_FOUND,
            DuplicateName(_) | DuplicateDocument(_) | RecordLocked(_) | AlreadyLocked(_) | InvalidTransition { .. }
            | NoBatches => StatusCode::CONFLICT,
            SchemaParse(_) | DocsNotIngested(_) | PilotCapExceeded { .. } | UnknownColumn(_) | InvalidRequest(_)
            | Ingest(_) | Verify(_) | Eval(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Llm(_) | Generate(_) => StatusCode::BAD_GATEWAY,
            Db(_) | Corrupt(_) | Invariant(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.code, "message": self.message}))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> Result<T, StoreError> + Send + 'static,
    T: Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string())),
    }
}

fn actor(headers: &HeaderMap) -> String {
    headers
        .get(ACTOR_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .unwrap_or(DEFAULT_ACTOR)
        .to_string()
}

async fn auth(State(st): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &st.token {
        let given = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(token.as_ref()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "Unauthorized", "missing or wrong bearer token")
                .into_response();
        }
    }
    next.run(req).await
}

/// The API router. When `token` is set every request must carry
/// `Authorization: Bearer {token}`.
pub fn router(service: Arc<CurationService>, token: Option<String>) -> Router {
    let state = AppState {
        service,
        token: token.map(Arc::from),
    };
    Router::new()
        .route("/projects", post(create_project))
        .route("/projects/:id", get(get_project))
        .route("/projects/:id/documents", post(add_documents))
        .route("/projects/:id/schema", put(update_schema))
        .route("/projects/:id/batches", post(run_batch))
        .route("/projects/:id/export", get(export))
        .route("/projects/:id/audit", get(audit))
        .route("/batches/:id", get(get_batch))
        .route("/records/:id", get(get_record))
        .route("/records/:id/cells/:column", patch(edit_cell))
        .route("/records/:id/lock", post(lock).delete(unlock))
        .route("/records/:id/irrelevant", post(mark_irrelevant).delete(unmark_irrelevant))
        .route("/records/:id/provenance", get(provenance))
        .route("/records/:id/support", get(support))
        .route("/records/:id/explain", post(explain))
        .route_layer(middleware::from_fn_with_state(state.clone(), auth))
        .with_state(state)
}

/// Serve until the process is stopped.
pub async fn serve(listener: tokio::net::TcpListener, service: Arc<CurationService>, token: Option<String>) -> std::io::Result<()> {
    axum::serve(listener, router(service, token)).await
}

#[derive(Deserialize)]
struct CreateProject {
    name: String,
    /// Schema file content: a CSV header row or a JSON column list.
    schema: String,
    #[serde(default)]
    documents: Vec<DocumentUpload>,
}

async fn create_project(State(st): State<AppState>, Json(body): Json<CreateProject>) -> ApiResult<impl IntoResponse> {
    let view = blocking(move || st.service.create_project(&body.name, &body.schema, body.documents)).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_project(State(st): State<AppState>, Path(id): Path<i64>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || st.service.get_project(id)).await?))
}

#[derive(Deserialize)]
struct AddDocuments {
    documents: Vec<DocumentUpload>,
}

async fn add_documents(
    State(st): State<AppState>,
    Path(id): Path<i64>,
    Json(body): Json<AddDocuments>,
) -> ApiResult<impl IntoResponse> {
    let docs = blocking(move || st.service.add_documents(id, body.documents)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "documents": docs }))))
}

#[derive(Deserialize)]
struct UpdateSchema {
    schema: String,
}

async fn update_schema(
    State(st): State<AppState>,
    Path(id): Path<i64>,
    Json(body): Json<UpdateSchema>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || st.service.update_schema(id, &body.schema)).await?))
}

#[derive(Deserialize)]
struct RunBatch {
    phase: Phase,
    doc_ids: Vec<String>,
}

async fn run_batch(State(st): State<AppState>, Path(id): Path<i64>, Json(body): Json<RunBatch>) -> ApiResult<impl IntoResponse> {
    let batch = blocking(move || st.service.run_batch(id, body.phase, &body.doc_ids)).await?;
    Ok((StatusCode::CREATED, Json(batch)))
}

async fn get_batch(State(st): State<AppState>, Path(id): Path<i64>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || st.service.get_batch(id)).await?))
}

async fn get_record(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || st.service.get_record(&id)).await?))
}

#[derive(Deserialize)]
struct EditCell {
    value: String,
}

async fn edit_cell(
    State(st): State<AppState>,
    Path((id, column)): Path<(String, String)>,
    headers: HeaderMap,
    Json(body): Json<EditCell>,
) -> ApiResult<impl IntoResponse> {
    let who = actor(&headers);
    Ok(Json(blocking(move || st.service.apply_edit(&id, &column, &body.value, &who)).await?))
}

async fn lock(State(st): State<AppState>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<impl IntoResponse> {
    let who = actor(&headers);
    Ok(Json(blocking(move || st.service.lock_record(&id, &who)).await?))
}

async fn unlock(State(st): State<AppState>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<impl IntoResponse> {
    let who = actor(&headers);
    Ok(Json(blocking(move || st.service.unlock_record(&id, &who)).await?))
}

async fn mark_irrelevant(
    State(st): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<impl IntoResponse> {
    let who = actor(&headers);
    Ok(Json(blocking(move || st.service.mark_irrelevant(&id, &who)).await?))
}

async fn unmark_irrelevant(
    State(st): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<impl IntoResponse> {
    let who = actor(&headers);
    Ok(Json(blocking(move || st.service.unmark_irrelevant(&id, &who)).await?))
}

async fn provenance(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || st.service.provenance(&id)).await?))
}

#[derive(Deserialize)]
struct SupportQuery {
    column: Option<String>,
    k: Option<usize>,
}

async fn support(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<SupportQuery>,
    headers: HeaderMap,
) -> ApiResult<impl IntoResponse> {
    let who = actor(&headers);
    let k = q.k.unwrap_or(DEFAULT_TOP_K);
    let paragraphs = blocking(move || st.service.support(&id, q.column.as_deref(), k, &who)).await?;
    Ok(Json(json!({ "paragraphs": paragraphs })))
}

#[derive(Deserialize)]
struct ExplainBody {
    column: String,
}

async fn explain(
    State(st): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Json(body): Json<ExplainBody>,
) -> ApiResult<impl IntoResponse> {
    let who = actor(&headers);
    Ok(Json(blocking(move || st.service.explain(&id, &body.column, &who)).await?))
}

#[derive(Deserialize)]
struct ExportQuery {
    format: Option<ExportFormat>,
    #[serde(default)]
    include_irrelevant: bool,
}

async fn export(State(st): State<AppState>, Path(id): Path<i64>, Query(q): Query<ExportQuery>) -> ApiResult<Response> {
    let format = q.format.unwrap_or(ExportFormat::Json);
    let bytes = blocking(move || st.service.export(id, format, q.include_irrelevant)).await?;
    let content_type = match format {
        ExportFormat::Csv => "text/csv; charset=utf-8",
        ExportFormat::Json => "application/json",
    };
    Ok(([(header::CONTENT_TYPE, content_type)], bytes).into_response())
}

async fn audit(State(st): State<AppState>, Path(id): Path<i64>) -> ApiResult<impl IntoResponse> {
    let events = blocking(move || st.service.audit_log(id)).await?;
    Ok(Json(json!({ "events": events })))
}
