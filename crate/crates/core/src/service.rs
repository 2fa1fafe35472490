//! HTTP annotation API.
//!
//! | Method | Path | |
//! |---|---|---|
//! | GET | `/api/schema` | attribute names, ranges and gating |
//! | GET | `/api/frames` | frame list with status and revision |
//! | GET | `/api/frames/{id}` | one frame with its annotation |
//! | GET | `/api/frames/{id}/image` | the frame's image file |
//! | PUT | `/api/frames/{id}/attributes` | save an annotation (optimistic revision check) |
//! | POST | `/api/render` | top-view and perspective preview PNGs |
//! | POST | `/api/frames/{id}/copy-from/{prev}` | copy the previous frame's annotation as a draft |
//!
//! Every write is persisted to the manifest before the response is sent.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;

use crate::camera::{bev_to_perspective, CameraModel};
use crate::grid::GridSpec;
use crate::io::calib::{CalibRecord, CameraMount};
use crate::io::grid_file::encode_png;
use crate::io::manifest::{load_manifest, save_manifest, FrameRecord, FrameStatus, ManifestError};
use crate::render::render;
use crate::scene::{self, SceneAttributes, Violation};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("calibrations line {line}: {message}")]
    Calib { line: usize, message: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    /// CLI exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            ServiceError::Io(_) => crate::cli::EXIT_INTERNAL,
            _ => crate::cli::EXIT_DATA,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub manifest_path: PathBuf,
    pub images_dir: PathBuf,
    pub calibs: HashMap<String, CameraModel>,
    /// Camera for frames and render requests without a listed calibration.
    pub default_camera: CameraModel,
    pub spec: GridSpec,
}

/// Preview camera used when no calibration is configured: a 1242x375 image
/// with a 720 px focal length, principal point at the center.
pub fn preview_camera() -> CameraModel {
    let mount = CameraMount::default();
    CameraModel {
        fx: 720.0,
        fy: 720.0,
        cx: mount.image_width as f64 / 2.0,
        cy: mount.image_height as f64 / 2.0,
        image_width: mount.image_width,
        image_height: mount.image_height,
        height: mount.height,
        pitch: mount.pitch,
    }
}

impl ServiceConfig {
    pub fn new(manifest_path: PathBuf, images_dir: PathBuf) -> Self {
        ServiceConfig {
            manifest_path,
            images_dir,
            calibs: HashMap::new(),
            default_camera: preview_camera(),
            spec: GridSpec::default(),
        }
    }
}

/// Read a calibration JSONL file of `{"calib_id": .., "camera": {..}}`.
pub fn load_calib_records(path: &Path) -> Result<HashMap<String, CameraModel>, ServiceError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| ServiceError::Calib {
            line: idx + 1,
            message,
        };
        let record: CalibRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        record.camera.validate().map_err(|e| bad(e.to_string()))?;
        if out.insert(record.calib_id.clone(), record.camera).is_some() {
            return Err(bad(format!("duplicate calib_id `{}`", record.calib_id)));
        }
    }
    Ok(out)
}

struct Frames {
    records: Vec<FrameRecord>,
    index: HashMap<String, usize>,
}

#[derive(Clone)]
pub struct AppState {
    config: Arc<ServiceConfig>,
    frames: Arc<Mutex<Frames>>,
}

impl AppState {
    /// Load the manifest named in `config`.
    pub fn load(config: ServiceConfig) -> Result<Self, ServiceError> {
        let records = load_manifest(&config.manifest_path)?;
        let index = records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.frame_id.clone(), i))
            .collect();
        Ok(AppState {
            config: Arc::new(config),
            frames: Arc::new(Mutex::new(Frames { records, index })),
        })
    }

    fn camera_for(&self, calib_id: &str) -> Option<CameraModel> {
        self.config.calibs.get(calib_id).copied()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/schema", get(get_schema))
        .route("/api/frames", get(list_frames))
        .route("/api/frames/{id}", get(get_frame))
        .route("/api/frames/{id}/image", get(get_image))
        .route("/api/frames/{id}/attributes", put(put_attributes))
        .route("/api/frames/{id}/copy-from/{prev}", post(copy_from))
        .route("/api/render", post(post_render))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Bind `addr` and serve until the process is stopped.
pub async fn serve(config: ServiceConfig, addr: &str) -> Result<(), ServiceError> {
    let state = AppState::load(config)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    println!("serving on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}

struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: json!({ "error": message.into() }),
        }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown {what} `{id}`"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Serialize)]
struct FrameSummary<'a> {
    frame_id: &'a str,
    image_path: &'a str,
    calib_id: &'a str,
    status: FrameStatus,
    revision: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    object_count: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    annotation_seconds: Option<f64>,
}

#[derive(Serialize)]
struct FrameDetail<'a> {
    #[serde(flatten)]
    summary: FrameSummary<'a>,
    attributes: Option<&'a SceneAttributes>,
}

fn summary(record: &FrameRecord) -> FrameSummary<'_> {
    FrameSummary {
        frame_id: &record.frame_id,
        image_path: &record.image_path,
        calib_id: &record.calib_id,
        status: record.effective_status(),
        revision: record.revision.unwrap_or(0),
        object_count: record.object_count,
        annotation_seconds: record.annotation_seconds,
    }
}

fn detail(record: &FrameRecord) -> Value {
    serde_json::to_value(FrameDetail {
        summary: summary(record),
        attributes: record.attributes.as_ref(),
    })
    .expect("frame detail serializes")
}

async fn get_schema() -> Json<scene::AttributeSchema> {
    Json(scene::schema())
}

async fn list_frames(State(state): State<AppState>) -> Json<Value> {
    let frames = state.frames.lock().unwrap();
    let list: Vec<FrameSummary> = frames.records.iter().map(summary).collect();
    Json(serde_json::to_value(list).expect("frame list serializes"))
}

async fn get_frame(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let frames = state.frames.lock().unwrap();
    let &i = frames.index.get(&id).ok_or_else(|| ApiError::not_found("frame", &id))?;
    Ok(Json(detail(&frames.records[i])))
}

fn content_type(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("bmp") => "image/bmp",
        Some("webp") => "image/webp",
        _ => "application/octet-stream",
    }
}

async fn get_image(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let image_path = {
        let frames = state.frames.lock().unwrap();
        let &i = frames.index.get(&id).ok_or_else(|| ApiError::not_found("frame", &id))?;
        frames.records[i].image_path.clone()
    };
    let path = state.config.images_dir.join(&image_path);
    let bytes = tokio::fs::read(&path).await.map_err(|e| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            format!("image `{image_path}` of frame `{id}`: {e}"),
        )
    })?;
    Ok(([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response())
}

/// Parse a JSON body, mapping syntax errors to 400.
fn parse_body(body: &Bytes) -> ApiResult<Value> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("invalid JSON body: {e}")))
}

/// Decode and validate an annotation, echoing every violation on failure.
fn parse_annotation(value: Option<&Value>) -> ApiResult<SceneAttributes> {
    let value = value
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing field `attributes`"))?;
    let theta: SceneAttributes = serde_json::from_value(value.clone())
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("invalid annotation: {e}")))?;
    let report = scene::validate(&theta);
    if !report.ok {
        return Err(ApiError {
            status: StatusCode::BAD_REQUEST,
            body: json!({
                "error": "annotation failed validation",
                "violations": report.violations.iter().map(violation_json).collect::<Vec<_>>(),
            }),
        });
    }
    Ok(theta)
}

fn violation_json(v: &Violation) -> Value {
    json!({ "field": v.field, "message": v.message })
}

#[derive(Deserialize)]
struct SaveRequest {
    expected_revision: u64,
    #[serde(default)]
    edit_seconds: Option<f64>,
    #[serde(default)]
    status: Option<FrameStatus>,
}

fn persist(state: &AppState, frames: &Frames) -> ApiResult<()> {
    save_manifest(&frames.records, &state.config.manifest_path).map_err(|e| {
        log::error!("persisting manifest: {e}");
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("saving manifest: {e}"))
    })
}

/// Apply `update` to frame `index` and persist; on a failed save the
/// in-memory record is restored so memory and disk never diverge.
fn commit(
    state: &AppState,
    frames: &mut Frames,
    index: usize,
    update: impl FnOnce(&mut FrameRecord),
) -> ApiResult<Value> {
    let previous = frames.records[index].clone();
    update(&mut frames.records[index]);
    if let Err(e) = persist(state, frames) {
        frames.records[index] = previous;
        return Err(e);
    }
    Ok(detail(&frames.records[index]))
}

async fn put_attributes(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let value = parse_body(&body)?;
    let request: SaveRequest = serde_json::from_value(value.clone())
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("invalid request: {e}")))?;
    if let Some(s) = request.edit_seconds {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                format!("edit_seconds must be a non-negative number, got {s}"),
            ));
        }
    }

    let mut frames = state.frames.lock().unwrap();
    let &i = frames.index.get(&id).ok_or_else(|| ApiError::not_found("frame", &id))?;
    let theta = parse_annotation(value.get("attributes"))?;
    let current = frames.records[i].revision.unwrap_or(0);
    if request.expected_revision != current {
        return Err(ApiError {
            status: StatusCode::CONFLICT,
            body: json!({
                "error": format!(
                    "revision conflict: expected {}, current is {current}",
                    request.expected_revision
                ),
                "current_revision": current,
            }),
        });
    }
    let detail = commit(&state, &mut frames, i, |record| {
        record.attributes = Some(theta);
        record.revision = Some(current + 1);
        record.status = Some(request.status.unwrap_or(FrameStatus::Done));
        if let Some(s) = request.edit_seconds {
            record.annotation_seconds = Some(record.annotation_seconds.unwrap_or(0.0) + s);
        }
    })?;
    Ok(Json(detail))
}

async fn copy_from(
    State(state): State<AppState>,
    UrlPath((id, prev)): UrlPath<(String, String)>,
) -> ApiResult<Json<Value>> {
    let mut frames = state.frames.lock().unwrap();
    let &i = frames.index.get(&id).ok_or_else(|| ApiError::not_found("frame", &id))?;
    let &j = frames.index.get(&prev).ok_or_else(|| ApiError::not_found("frame", &prev))?;
    let attributes = frames.records[j].attributes.ok_or_else(|| {
        ApiError::new(
            StatusCode::CONFLICT,
            format!("frame `{prev}` has no annotation to copy"),
        )
    })?;
    let detail = commit(&state, &mut frames, i, |record| {
        record.attributes = Some(attributes);
        record.revision = Some(record.revision.unwrap_or(0) + 1);
        record.status = Some(FrameStatus::Draft);
    })?;
    Ok(Json(detail))
}

#[derive(Serialize)]
struct RenderResponse {
    bev: String,
    overlay: String,
}

async fn post_render(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<RenderResponse>> {
    let value = parse_body(&body)?;
    let theta = parse_annotation(value.get("attributes"))?;
    let cam = match value.get("calib_id") {
        None | Some(Value::Null) => state.config.default_camera,
        Some(Value::String(calib_id)) => state
            .camera_for(calib_id)
            .ok_or_else(|| ApiError::not_found("calib_id", calib_id))?,
        Some(other) => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                format!("calib_id must be a string, got {other}"),
            ))
        }
    };
    let spec = state.config.spec;
    let rendered = tokio::task::spawn_blocking(move || -> Result<RenderResponse, String> {
        let bev = render(&theta, &spec).map_err(|e| e.to_string())?;
        let persp = bev_to_perspective(&bev, &spec, &cam).map_err(|e| e.to_string())?;
        let b64 = base64::engine::general_purpose::STANDARD;
        Ok(RenderResponse {
            bev: b64.encode(encode_png(&bev).map_err(|e| e.to_string())?),
            overlay: b64.encode(encode_png(&persp).map_err(|e| e.to_string())?),
        })
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))?;
    Ok(Json(rendered))
}
