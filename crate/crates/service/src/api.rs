//! JSON-over-HTTP API.
//!
//! | method | path                     | body / query                         |
//! |--------|--------------------------|--------------------------------------|
//! | POST   | `/jobs`                  | [`RunRequest`] -> `{"job_id"}` (202) |
//! | GET    | `/jobs/{id}`             | job state                            |
//! | GET    | `/search`                | `q`, `style`, `category`, `offset`, `limit` |
//! | GET    | `/entries/{id}`          | gallery entry                        |
//! | GET    | `/entries/{id}/glyph.svg`| `rank` (1-based, default 1), `size`  |

use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use gencolor_core::glyph::{layout_glyph, render_svg, GlyphConfig};

use crate::jobs::{JobManager, JobState};
use crate::runner::RunRequest;
use crate::search::{search, SearchQuery};
use crate::store::GalleryStore;

pub struct AppState {
    pub jobs: JobManager,
    pub store: Arc<GalleryStore>,
}

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

fn not_found(what: &str, id: &str) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, format!("no {what} {id:?}"))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JobCreated {
    pub job_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JobView {
    pub job_id: String,
    #[serde(flatten)]
    pub state: JobState,
}

async fn create_job(
    State(app): State<Arc<AppState>>,
    Json(request): Json<RunRequest>,
) -> Result<(StatusCode, Json<JobCreated>), ApiError> {
    request
        .spec
        .validate()
        .map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))?;
    let job_id = app.jobs.submit(request);
    Ok((StatusCode::ACCEPTED, Json(JobCreated { job_id })))
}

async fn job_status(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<JobView>, ApiError> {
    let state = app.jobs.status(&id).ok_or_else(|| not_found("job", &id))?;
    Ok(Json(JobView { job_id: id, state }))
}

async fn search_entries(
    State(app): State<Arc<AppState>>,
    Query(query): Query<SearchQuery>,
) -> Result<Response, ApiError> {
    let results = app
        .store
        .with_entries(|entries| search(entries, &query))
        .map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))?;
    Ok(Json(results).into_response())
}

async fn get_entry(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let entry = app.store.get(&id).ok_or_else(|| not_found("entry", &id))?;
    Ok(Json(entry).into_response())
}

#[derive(Debug, Deserialize)]
struct GlyphQuery {
    rank: Option<usize>,
    size: Option<u32>,
}

async fn get_glyph(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<GlyphQuery>,
) -> Result<Response, ApiError> {
    let entry = app.store.get(&id).ok_or_else(|| not_found("entry", &id))?;
    let rank = q.rank.unwrap_or(1);
    let palette = entry
        .palettes
        .iter()
        .find(|p| p.group_rank == rank)
        .ok_or_else(|| not_found("palette rank", &rank.to_string()))?;
    let mut config = GlyphConfig::default();
    if let Some(size) = q.size {
        config.size = size.clamp(16, 4096);
    }
    let layout = layout_glyph(palette, &config)
        .map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "image/svg+xml")], render_svg(&layout)).into_response())
}

async fn health() -> &'static str {
    "ok"
}

/// The UI may be served from another origin.
async fn allow_any_origin(mut response: Response) -> Response {
    let headers = response.headers_mut();
    headers.insert(header::ACCESS_CONTROL_ALLOW_ORIGIN, HeaderValue::from_static("*"));
    headers.insert(header::ACCESS_CONTROL_ALLOW_HEADERS, HeaderValue::from_static("content-type"));
    headers.insert(header::ACCESS_CONTROL_ALLOW_METHODS, HeaderValue::from_static("GET, POST"));
    response
}

async fn preflight() -> StatusCode {
    StatusCode::NO_CONTENT
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/jobs", post(create_job).options(preflight))
        .route("/jobs/{id}", get(job_status))
        .route("/search", get(search_entries))
        .route("/entries/{id}", get(get_entry))
        .route("/entries/{id}/glyph.svg", get(get_glyph))
        .layer(axum::middleware::map_response(allow_any_origin))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(state: Arc<AppState>, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
