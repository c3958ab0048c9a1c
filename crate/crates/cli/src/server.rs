use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use brainqc::annotation::{AnnotationError, AnnotationStore};
use brainqc::model::{Annotation, Grades};
use brainqc::nifti::{export_central_slices, read_nifti_file, write_slice_pngs, View};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::commands::{consensus_outcome_json, image_id_of, nii_files};
use crate::config::{self, resolve};
use crate::error::CliError;
use crate::Common;

pub const RATER_HEADER: &str = "x-rater-id";

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<RwLock<AnnotationStore>>,
    /// Directory holding `<image_id>_<view>.png`.
    pub slices_dir: PathBuf,
}

struct ApiError(StatusCode, CliError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<AnnotationError> for ApiError {
    fn from(e: AnnotationError) -> Self {
        let status = match &e {
            AnnotationError::UnknownRater(_) | AnnotationError::UnknownImage(_) => StatusCode::NOT_FOUND,
            AnnotationError::ValidationFailed(_) => StatusCode::UNPROCESSABLE_ENTITY,
            AnnotationError::NotReady { .. } | AnnotationError::NoDisagreement(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.into())
    }
}

fn bad_request(message: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, CliError::new("request", message))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/raters/{id}/next", get(next_image))
        .route("/api/images/{id}/slices/{file}", get(slice_png))
        .route("/api/images/{id}/annotations", get(get_annotations).post(post_annotation))
        .route("/api/images/{id}/consensus-resolution", post(post_resolution))
        .route("/api/progress", get(progress))
        .route("/api/export", get(export))
        .with_state(state)
}

fn slice_urls(image_id: &str) -> Value {
    let mut urls = serde_json::Map::new();
    for v in View::ALL {
        urls.insert(v.name().into(), json!(format!("/api/images/{image_id}/slices/{}.png", v.name())));
    }
    Value::Object(urls)
}

async fn next_image(State(s): State<AppState>, Path(rater): Path<String>) -> Result<Json<Value>, ApiError> {
    let store = s.store.read().expect("store lock");
    let total = store.images().len();
    Ok(Json(match store.next_image(&rater)? {
        Some((index, id)) => json!({
            "exhausted": false,
            "image_id": id,
            "index": index,
            "total": total,
            "slices": slice_urls(id),
        }),
        None => json!({ "exhausted": true, "total": total }),
    }))
}

async fn slice_png(State(s): State<AppState>, Path((id, file)): Path<(String, String)>) -> Result<Response, ApiError> {
    let view = file.strip_suffix(".png").and_then(View::parse).ok_or_else(|| {
        ApiError(
            StatusCode::NOT_FOUND,
            CliError::new("request", format!("no slice {file}; use axial, coronal or sagittal")),
        )
    })?;
    if !s.store.read().expect("store lock").contains_image(&id) {
        return Err(AnnotationError::UnknownImage(id).into());
    }
    let path = s.slices_dir.join(format!("{id}_{}.png", view.name()));
    let bytes = tokio::fs::read(&path).await.map_err(|e| ApiError(StatusCode::NOT_FOUND, CliError::io(&path, e)))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

/// Body of an annotation submission; the image comes from the path and the
/// rater from the body or the `X-Rater-Id` header.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationBody {
    #[serde(default)]
    pub rater_id: Option<String>,
    pub straight_reject: bool,
    #[serde(default)]
    pub gadolinium: Option<bool>,
    #[serde(default)]
    pub grades: Option<Grades>,
}

async fn post_annotation(
    State(s): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Json(body): Json<AnnotationBody>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let rater = body
        .rater_id
        .or_else(|| headers.get(RATER_HEADER).and_then(|v| v.to_str().ok()).map(str::to_string))
        .ok_or_else(|| bad_request("rater_id missing from body and X-Rater-Id header"))?;
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64);
    let annotation = Annotation {
        image_id: id.clone(),
        rater_id: rater.clone(),
        straight_reject: body.straight_reject,
        gadolinium: body.gadolinium,
        grades: body.grades,
        timestamp,
    };
    let version = s.store.write().expect("store lock").submit(annotation)?;
    Ok((StatusCode::CREATED, Json(json!({ "image_id": id, "rater_id": rater, "version": version }))))
}

async fn get_annotations(State(s): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let store = s.store.read().expect("store lock");
    let current = store.current_annotations(&id)?;
    let history = store.history(&id)?;
    let consensus = match store.consensus(&id) {
        Ok(outcome) => consensus_outcome_json(&outcome),
        Err(AnnotationError::NotReady { .. }) => json!({ "status": "awaiting-annotations", "label": null }),
        Err(e) => return Err(e.into()),
    };
    Ok(Json(json!({ "image_id": id, "current": current, "history": history, "consensus": consensus })))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolutionBody {
    pub straight_reject: bool,
}

async fn post_resolution(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<ResolutionBody>,
) -> Result<Json<Value>, ApiError> {
    let label = s.store.write().expect("store lock").resolve(&id, body.straight_reject)?;
    Ok(Json(json!({ "status": "consensus", "label": label })))
}

async fn progress(State(s): State<AppState>) -> Json<Value> {
    Json(serde_json::to_value(s.store.read().expect("store lock").progress()).expect("progress serializes"))
}

async fn export(State(s): State<AppState>) -> Response {
    let mut body = String::new();
    for line in s.store.read().expect("store lock").export_labels() {
        body.push_str(&serde_json::to_string(&line).expect("export serializes"));
        body.push('\n');
    }
    ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ServeConfig {
    /// Directory of `<image_id>.nii` volumes to annotate, in file-name order.
    pub images_dir: Option<PathBuf>,
    /// Explicit image order; overrides the directory listing.
    pub images: Option<Vec<String>>,
    /// Slice PNGs; defaults to `slices` inside `images_dir`. Missing PNGs are generated at startup.
    pub slices_dir: Option<PathBuf>,
    pub raters: [String; 2],
    pub bind: String,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            images_dir: None,
            images: None,
            slices_dir: None,
            raters: ["rater1".into(), "rater2".into()],
            bind: "127.0.0.1:8080".into(),
        }
    }
}

/// Builds the state for `serve-annotate`: image list, pre-rendered slices and the log-backed store.
pub fn prepare(common: &Common) -> Result<(AppState, ServeConfig), CliError> {
    let base = common.config.as_deref();
    let cfg: ServeConfig = config::load(base)?;
    let images_dir = cfg.images_dir.as_ref().map(|d| resolve(base, d));
    let slices_dir = match (&cfg.slices_dir, &images_dir) {
        (Some(d), _) => resolve(base, d),
        (None, Some(d)) => d.join("slices"),
        (None, None) => return Err(CliError::config("set `images_dir` or `slices_dir`")),
    };
    let files = match &images_dir {
        Some(d) => nii_files(d)?,
        None => Vec::new(),
    };
    let images = match &cfg.images {
        Some(list) => list.clone(),
        None => files.iter().map(|p| image_id_of(p)).collect(),
    };
    if images.is_empty() {
        return Err(CliError::config("no images to annotate"));
    }
    for path in &files {
        let id = image_id_of(path);
        if images.contains(&id) && !slices_dir.join(format!("{id}_axial.png")).exists() {
            write_slice_pngs(&slices_dir, &id, &export_central_slices(&read_nifti_file(path)?))?;
        }
    }
    let log = common.out_or("annotations.jsonl");
    let mut store = AnnotationStore::open(&log, images, cfg.raters.clone())?;
    store.compact()?;
    Ok((AppState { store: Arc::new(RwLock::new(store)), slices_dir }, cfg))
}

pub fn serve(common: &Common) -> Result<Value, CliError> {
    let (state, cfg) = prepare(common)?;
    let addr: SocketAddr = cfg.bind.parse().map_err(|e| CliError::config(format!("bind address {}: {e}", cfg.bind)))?;
    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::new("io", e.to_string()))?;
    runtime.block_on(async move {
        let listener =
            tokio::net::TcpListener::bind(addr).await.map_err(|e| CliError::new("io", format!("{addr}: {e}")))?;
        log::info!("annotation server listening on http://{addr}");
        axum::serve(listener, router(state)).await.map_err(|e| CliError::new("io", e.to_string()))
    })?;
    Ok(json!({ "stopped": true }))
}
