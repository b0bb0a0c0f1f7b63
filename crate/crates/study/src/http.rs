//! HTTP JSON API over [`Study`].

use std::io::SeekFrom;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Body;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::io::{AsyncReadExt, AsyncSeekExt};
use tower_http::services::ServeDir;

use crate::config::StudyConfig;
use crate::error::{ErrorCode, StudyError};
use crate::screening::ScreeningSubmission;
use crate::service::{CreateSession, Export, Study};
use crate::session::{SubmissionEnvelope, Which};

pub struct ApiError(pub StudyError);

impl From<StudyError> for ApiError {
    fn from(e: StudyError) -> Self {
        ApiError(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(StudyError::Validation(e.body_text()))
    }
}

pub fn status_of(code: ErrorCode) -> StatusCode {
    match code {
        ErrorCode::UnknownSession | ErrorCode::UnknownToken => StatusCode::NOT_FOUND,
        ErrorCode::Validation => StatusCode::UNPROCESSABLE_ENTITY,
        ErrorCode::Rejected => StatusCode::FORBIDDEN,
        ErrorCode::WrongPhase | ErrorCode::OutOfOrder | ErrorCode::Duplicate => StatusCode::CONFLICT,
        ErrorCode::TokenConsumed => StatusCode::GONE,
        ErrorCode::Unauthorized => StatusCode::UNAUTHORIZED,
        ErrorCode::ManifestTooSmall | ErrorCode::Config | ErrorCode::Storage => {
            StatusCode::INTERNAL_SERVER_ERROR
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let code = self.0.code();
        let status = status_of(code);
        if status.is_server_error() {
            log::error!("{}", self.0);
        }
        let mut body = json!({ "error": code, "message": self.0.to_string() });
        match &self.0 {
            StudyError::WrongPhase { actual, .. } => body["current"] = json!(actual),
            StudyError::Rejected(reason) => body["reason"] = json!(reason),
            _ => {}
        }
        let mut response = (status, Json(body)).into_response();
        if code == ErrorCode::Unauthorized {
            response
                .headers_mut()
                .insert(header::WWW_AUTHENTICATE, HeaderValue::from_static("Bearer"));
        }
        response
    }
}

type ApiResult<T> = Result<T, ApiError>;
type AppState = Arc<Study>;

pub fn router(study: Arc<Study>) -> Router {
    let ui_root = study.config().ui_root.clone();
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_view))
        .route("/sessions/{id}/screening", get(screening_challenge).post(submit_screening))
        .route("/sessions/{id}/screening/landolt/{ring}", get(landolt_ring))
        .route("/sessions/{id}/assignments", get(assignments))
        .route("/sessions/{id}/playback/{index}/{which}", post(issue_playback))
        .route("/sessions/{id}/submissions", post(submit))
        .route("/questionnaire", get(questionnaire))
        .route("/media/{token}", get(media))
        .route("/export/ratings.csv", get(export_ratings))
        .route("/export/object_checks.csv", get(export_object_checks))
        .with_state(study);
    match ui_root {
        Some(root) => api.fallback_service(ServeDir::new(root).append_index_html_on_directories(true)),
        None => api,
    }
}

async fn create_session(
    State(study): State<AppState>,
    payload: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(request) = payload?;
    let view = study.create_session(&request)?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn session_view(State(study): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(study.session_view(&id)?).into_response())
}

#[derive(Debug, Deserialize)]
struct PpmmQuery {
    ppmm: f64,
}

async fn screening_challenge(
    State(study): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<PpmmQuery>,
) -> ApiResult<Response> {
    Ok(Json(study.screening_challenge(&id, q.ppmm)?).into_response())
}

async fn landolt_ring(
    State(study): State<AppState>,
    Path((id, ring)): Path<(String, usize)>,
    Query(q): Query<PpmmQuery>,
) -> ApiResult<Response> {
    let svg = study.landolt_ring_svg(&id, q.ppmm, ring)?;
    Ok((
        [
            (header::CONTENT_TYPE, "image/svg+xml"),
            (header::CACHE_CONTROL, "no-store"),
        ],
        svg,
    )
        .into_response())
}

async fn submit_screening(
    State(study): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<ScreeningSubmission>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(submission) = payload?;
    Ok(Json(study.submit_screening(&id, &submission)?).into_response())
}

async fn assignments(State(study): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(study.assignments(&id)?).into_response())
}

async fn issue_playback(
    State(study): State<AppState>,
    Path((id, index, which)): Path<(String, usize, String)>,
) -> ApiResult<Response> {
    let which: Which = which.parse()?;
    Ok(Json(study.issue_playback(&id, index, which)?).into_response())
}

async fn submit(
    State(study): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<SubmissionEnvelope>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(envelope) = payload?;
    Ok(Json(study.submit(&id, &envelope)?).into_response())
}

async fn questionnaire(State(study): State<AppState>) -> Json<crate::service::QuestionnaireSchema> {
    Json(study.questionnaire())
}

/// A single byte range resolved against the file length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByteRange {
    Full,
    Partial { start: u64, end: u64 },
    Unsatisfiable,
}

/// Parses a `Range` header. Malformed and multi-range headers are ignored
/// and the whole file is served.
pub fn parse_range(value: Option<&str>, len: u64) -> ByteRange {
    let Some(spec) = value.and_then(|v| v.trim().strip_prefix("bytes=")) else {
        return ByteRange::Full;
    };
    if spec.contains(',') {
        return ByteRange::Full;
    }
    let Some((a, b)) = spec.split_once('-') else {
        return ByteRange::Full;
    };
    let (a, b) = (a.trim(), b.trim());
    let parsed = match (a.is_empty(), b.is_empty()) {
        (true, false) => b.parse::<u64>().ok().map(|n| {
            if n == 0 {
                None
            } else {
                Some((len.saturating_sub(n), len.saturating_sub(1)))
            }
        }),
        (false, _) => a.parse::<u64>().ok().and_then(|start| {
            let end = if b.is_empty() { Some(u64::MAX) } else { b.parse::<u64>().ok() };
            end.filter(|&e| e >= start).map(|e| Some((start, e.min(len.saturating_sub(1)))))
        }),
        (true, true) => None,
    };
    match parsed {
        None => ByteRange::Full,
        Some(None) => ByteRange::Unsatisfiable,
        Some(Some((start, _))) if start >= len => ByteRange::Unsatisfiable,
        Some(Some((start, end))) => ByteRange::Partial { start, end },
    }
}

fn content_type(path: &std::path::Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("mp4") | Some("m4v") => "video/mp4",
        Some("webm") => "video/webm",
        Some("mkv") => "video/x-matroska",
        Some("mov") => "video/quicktime",
        _ => "application/octet-stream",
    }
}

async fn media(
    State(study): State<AppState>,
    Path(token): Path<String>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let path = study.peek_media(&token)?;
    let len = tokio::fs::metadata(&path)
        .await
        .map_err(|e| StudyError::Storage(format!("{}: {e}", path.display())))?
        .len();
    let range = parse_range(headers.get(header::RANGE).and_then(|v| v.to_str().ok()), len);
    let (start, end) = match range {
        ByteRange::Full => (0, len.saturating_sub(1)),
        ByteRange::Partial { start, end } => (start, end),
        ByteRange::Unsatisfiable => {
            return Ok((
                StatusCode::RANGE_NOT_SATISFIABLE,
                [(header::CONTENT_RANGE, format!("bytes */{len}"))],
            )
                .into_response())
        }
    };
    let path = study.authorize_media(&token, start)?;
    let count = if len == 0 { 0 } else { end - start + 1 };
    let mut file = tokio::fs::File::open(&path)
        .await
        .map_err(|e| StudyError::Storage(format!("{}: {e}", path.display())))?;
    file.seek(SeekFrom::Start(start)).await.map_err(StudyError::from)?;
    let mut bytes = Vec::with_capacity(count as usize);
    file.take(count).read_to_end(&mut bytes).await.map_err(StudyError::from)?;
    let mut response = Response::new(Body::from(bytes));
    let h = response.headers_mut();
    h.insert(header::CONTENT_TYPE, HeaderValue::from_static(content_type(&path)));
    h.insert(header::ACCEPT_RANGES, HeaderValue::from_static("bytes"));
    h.insert(header::CACHE_CONTROL, HeaderValue::from_static("no-store"));
    h.insert(header::CONTENT_LENGTH, HeaderValue::from(count));
    if let ByteRange::Partial { .. } = range {
        *response.status_mut() = StatusCode::PARTIAL_CONTENT;
        response.headers_mut().insert(
            header::CONTENT_RANGE,
            HeaderValue::from_str(&format!("bytes {start}-{end}/{len}")).expect("ascii header"),
        );
    }
    Ok(response)
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

fn require_operator(study: &Study, headers: &HeaderMap) -> Result<(), StudyError> {
    let expected = study.config().operator_token.as_deref().ok_or(StudyError::Unauthorized)?;
    let presented = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .ok_or(StudyError::Unauthorized)?;
    if constant_time_eq(presented.trim().as_bytes(), expected.as_bytes()) {
        Ok(())
    } else {
        Err(StudyError::Unauthorized)
    }
}

#[derive(Debug, Default, Deserialize)]
struct ExportQuery {
    #[serde(default)]
    include_incomplete: bool,
}

fn csv_response(export: Export) -> Response {
    let mut response = Response::new(Body::from(export.csv));
    let h = response.headers_mut();
    h.insert(header::CONTENT_TYPE, HeaderValue::from_static("text/csv; charset=utf-8"));
    h.insert("x-export-rows", HeaderValue::from(export.rows));
    h.insert("x-export-sessions", HeaderValue::from(export.sessions));
    if let Some(w) = export.warning.and_then(|w| HeaderValue::from_str(&w).ok()) {
        h.insert("x-export-warning", w);
    }
    response
}

async fn export_ratings(
    State(study): State<AppState>,
    headers: HeaderMap,
    Query(q): Query<ExportQuery>,
) -> ApiResult<Response> {
    require_operator(&study, &headers)?;
    Ok(csv_response(study.export_ratings(q.include_incomplete)?))
}

async fn export_object_checks(
    State(study): State<AppState>,
    headers: HeaderMap,
    Query(q): Query<ExportQuery>,
) -> ApiResult<Response> {
    require_operator(&study, &headers)?;
    Ok(csv_response(study.export_object_checks(q.include_incomplete)?))
}

/// Opens the study described by `config` and serves it until Ctrl-C.
pub async fn serve(config: StudyConfig) -> Result<(), StudyError> {
    let addr: SocketAddr = config
        .bind
        .parse()
        .map_err(|e| StudyError::Config(format!("bind address `{}`: {e}", config.bind)))?;
    let study = Arc::new(Study::open(config)?);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(study))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
