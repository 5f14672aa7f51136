use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;
use tower::ServiceExt;
use tower_http::services::ServeFile;

use crate::error::ServiceError;
use crate::model::DraftAnnotation;
use crate::project::{Project, ProjectRegistry};

pub const DEFAULT_FPS: f64 = 2.0;

type Shared = Arc<ProjectRegistry>;
type ApiResult<T> = Result<T, ServiceError>;

/// Builds the full HTTP surface over a set of loaded projects.
pub fn router(registry: ProjectRegistry) -> Router {
    let api = Router::new()
        .route("/projects", get(list_projects))
        .route("/projects/{p}/videos", get(list_videos))
        .route("/projects/{p}/videos/{v}/frames", get(get_frames))
        .route("/projects/{p}/videos/{v}/annotation", get(get_annotation).post(post_annotation))
        .route("/projects/{p}/videos/{v}/advance", axum::routing::post(post_advance))
        .route("/projects/{p}/videos/{v}/video", get(get_video))
        .route("/projects/{p}/export", get(get_export));
    Router::new()
        .route("/healthz", get(healthz))
        .nest("/api", api)
        .route("/frames/{p}/{v}/{rate}/{file}", get(get_frame))
        .fallback(|| async { ServiceError::NotFound })
        .with_state(Arc::new(registry))
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn list_projects(State(reg): State<Shared>) -> Json<Vec<String>> {
    Json(reg.ids().map(str::to_owned).collect())
}

async fn list_videos(State(reg): State<Shared>, Path(p): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(reg.get(&p)?.list_videos()))
}

#[derive(Debug, Deserialize)]
struct FramesQuery {
    fps: Option<f64>,
}

async fn get_frames(
    State(reg): State<Shared>,
    Path((p, v)): Path<(String, String)>,
    query: Result<Query<FramesQuery>, QueryRejection>,
) -> ApiResult<impl IntoResponse> {
    let Query(q) = query.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    Ok(Json(reg.get(&p)?.frames(&v, q.fps.unwrap_or(DEFAULT_FPS))?))
}

async fn get_annotation(
    State(reg): State<Shared>,
    Path((p, v)): Path<(String, String)>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(reg.get(&p)?.annotation(&v)?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmitBody {
    draft: DraftAnnotation,
    expected_revision: u64,
    /// Marks the author's pass as finished.
    #[serde(default)]
    complete: bool,
}

async fn post_annotation(
    State(reg): State<Shared>,
    Path((p, v)): Path<(String, String)>,
    body: Result<Json<SubmitBody>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(body) = body.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    let project = reg.get(&p)?;
    let ack = blocking(project, move |proj| {
        proj.submit(&v, body.draft, body.expected_revision, body.complete)
    })
    .await?;
    Ok(Json(ack))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdvanceBody {
    author_pass: u8,
    expected_revision: u64,
}

async fn post_advance(
    State(reg): State<Shared>,
    Path((p, v)): Path<(String, String)>,
    body: Result<Json<AdvanceBody>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(body) = body.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    let project = reg.get(&p)?;
    let ack = blocking(project, move |proj| proj.advance(&v, body.author_pass, body.expected_revision)).await?;
    Ok(Json(ack))
}

async fn get_export(State(reg): State<Shared>, Path(p): Path<String>) -> ApiResult<Response> {
    let bytes = reg.get(&p)?.export_bytes()?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

async fn get_video(
    State(reg): State<Shared>,
    Path((p, v)): Path<(String, String)>,
    req: Request,
) -> ApiResult<Response> {
    let path = reg.get(&p)?.video_file(&v)?;
    serve_file(path, req).await
}

async fn get_frame(
    State(reg): State<Shared>,
    Path((p, v, rate, file)): Path<(String, String, String, String)>,
    req: Request,
) -> ApiResult<Response> {
    let path = reg.get(&p)?.frame_path(&v, &rate, &file).ok_or(ServiceError::NotFound)?;
    serve_file(path, req).await
}

/// Streams a file with range and conditional request support.
async fn serve_file(path: PathBuf, req: Request) -> ApiResult<Response> {
    let res = ServeFile::new(path).oneshot(req).await.unwrap_or_else(|e: Infallible| match e {});
    if res.status() == StatusCode::NOT_FOUND {
        return Err(ServiceError::NotFound);
    }
    Ok(res.map(Body::new))
}

/// Runs a store write off the async executor.
async fn blocking<T: Send + 'static>(
    project: Arc<Project>,
    f: impl FnOnce(&Project) -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(move || f(&project))
        .await
        .map_err(|e| ServiceError::Storage(std::io::Error::other(e)))?
}
