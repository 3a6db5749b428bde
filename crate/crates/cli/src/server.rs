//! HTTP/JSON labeling API over a frames directory.
//!
//! - `GET /frames` → frame ids in numerical order
//! - `GET /frames/{id}` → original and annotated PNGs (base64) plus masks
//! - `POST /frames/{id}/label` `{states: {index: "add"|"subtract"|"reset"}, version?}`
//!   → `{gt_rle, version}`
//! - `GET /frames/{id}/label` → the stored label
//!
//! Reads are concurrent; writes are serialized per frame by [`LabelStore`].

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use base64::Engine;
use serde::{Deserialize, Serialize};

use offroad_core::harness::{Label, LabelStore, MaskRecord, ToggleState};
use offroad_core::mask::Rle;
use offroad_core::render::{annotated_image, patch_image};
use offroad_core::Error;

/// Pixels per patch cell in served images.
const IMAGE_SCALE: u32 = 8;

#[derive(Debug, Serialize, Deserialize)]
pub struct FrameView {
    pub frame_id: u64,
    pub width: usize,
    pub height: usize,
    pub original_image_b64: String,
    pub annotated_image_b64: String,
    pub masks: Vec<MaskRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelRequest {
    pub states: BTreeMap<usize, ToggleState>,
    /// Version the client last saw; a mismatch is rejected with 409.
    #[serde(default)]
    pub version: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelReply {
    pub gt_rle: Rle,
    pub version: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    /// Current server version on a version conflict.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<u64>,
}

struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, version) = match &self.0 {
            Error::UnknownFrame(_) => (StatusCode::NOT_FOUND, None),
            Error::VersionConflict { server, .. } => (StatusCode::CONFLICT, Some(*server)),
            Error::Config(_) => (StatusCode::BAD_REQUEST, None),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, None),
        };
        let body = ErrorBody {
            error: self.0.to_string(),
            version,
        };
        (status, Json(body)).into_response()
    }
}

type Shared = Arc<LabelStore>;

/// The labeling API over an opened store.
pub fn router(store: Shared) -> Router {
    Router::new()
        .route("/frames", get(list))
        .route("/frames/{id}", get(frame))
        .route("/frames/{id}/label", get(label).post(post_label))
        .with_state(store)
}

async fn list(State(store): State<Shared>) -> Json<Vec<u64>> {
    Json(store.frame_ids().to_vec())
}

async fn frame(
    State(store): State<Shared>,
    UrlPath(id): UrlPath<u64>,
) -> Result<Json<FrameView>, ApiError> {
    let stored = store.frame(id)?;
    let annotated = stored.annotated()?;
    let b64 = |bytes: Vec<u8>| base64::engine::general_purpose::STANDARD.encode(bytes);
    Ok(Json(FrameView {
        frame_id: id,
        width: stored.patch.width,
        height: stored.patch.height,
        original_image_b64: b64(patch_image(&stored.patch, IMAGE_SCALE).png_bytes()?),
        annotated_image_b64: b64(
            annotated_image(&annotated, &stored.patch, IMAGE_SCALE)?.png_bytes()?
        ),
        masks: stored.masks,
    }))
}

async fn label(
    State(store): State<Shared>,
    UrlPath(id): UrlPath<u64>,
) -> Result<Json<Label>, ApiError> {
    Ok(Json(store.label(id)?))
}

async fn post_label(
    State(store): State<Shared>,
    UrlPath(id): UrlPath<u64>,
    Json(req): Json<LabelRequest>,
) -> Result<Json<LabelReply>, ApiError> {
    // Label writes touch the filesystem under a per-frame lock.
    let label = tokio::task::spawn_blocking(move || store.apply(id, &req.states, req.version))
        .await
        .map_err(|e| Error::Config(format!("label worker failed: {e}")))??;
    Ok(Json(LabelReply {
        gt_rle: label.gt_rle,
        version: label.version,
    }))
}

/// Opens `dir` (validating every frame) and serves until interrupted.
pub async fn serve(dir: &Path, port: u16) -> anyhow::Result<()> {
    let store = Arc::new(LabelStore::open(dir)?);
    let addr = SocketAddr::from(([127, 0, 0, 1], port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!(
        "serving {} frames from {} on http://{addr}",
        store.frame_ids().len(),
        dir.display()
    );
    axum::serve(listener, router(store)).await?;
    Ok(())
}
