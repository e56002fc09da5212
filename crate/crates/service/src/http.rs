//! HTTP/JSON surface over [`PatientStore`].

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mstwin_core::asset::{Modality, Scale};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::analysis::AnalysisKind;
use crate::error::ServiceError;
use crate::store::{PatientStore, UploadMeta};

/// Header carrying the JSON format header of volume and sensor uploads.
pub const META_HEADER: &str = "x-asset-meta";
const MAX_BODY_BYTES: usize = 512 * 1024 * 1024;

type Shared = Arc<PatientStore>;

async fn blocking<R: Send + 'static>(f: impl FnOnce() -> Result<R, ServiceError> + Send + 'static) -> Result<R, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Io(std::io::Error::other(e.to_string())))?
}

fn json_bytes(status: StatusCode, bytes: Vec<u8>) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

#[derive(Debug, Deserialize)]
struct CreatePatient {
    patient_id: String,
}

async fn create_patient(State(store): State<Shared>, body: Bytes) -> Result<Response, ServiceError> {
    let req: CreatePatient =
        serde_json::from_slice(&body).map_err(|e| ServiceError::BadRequest(format!("expected {{\"patient_id\": ...}}: {e}")))?;
    let twin = blocking(move || store.create_patient(&req.patient_id)).await?;
    Ok(json_bytes(StatusCode::CREATED, twin.to_json()))
}

async fn list_patients(State(store): State<Shared>) -> Result<Json<Value>, ServiceError> {
    let ids = blocking(move || store.list_patients()).await?;
    Ok(Json(json!({ "patients": ids })))
}

#[derive(Debug, Default, Deserialize)]
struct UploadQuery {
    label: Option<String>,
    scale: Option<String>,
    acquired_at: Option<String>,
}

async fn upload_asset(
    State(store): State<Shared>,
    Path((id, modality)): Path<(String, String)>,
    Query(q): Query<UploadQuery>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ServiceError> {
    let modality: Modality = modality.parse().map_err(ServiceError::BadRequest)?;
    let scale = q
        .scale
        .as_deref()
        .map(str::parse::<Scale>)
        .transpose()
        .map_err(ServiceError::BadRequest)?;
    let header = headers.get(META_HEADER).map(|v| v.as_bytes().to_vec());
    let meta = UploadMeta {
        label: q.label,
        scale,
        acquired_at: q.acquired_at,
        header,
    };
    let record = blocking(move || store.upload_asset(&id, modality, &body, meta)).await?;
    Ok((StatusCode::CREATED, Json(record)).into_response())
}

async fn run_analysis(
    State(store): State<Shared>,
    Path((id, kind)): Path<(String, String)>,
    body: Bytes,
) -> Result<Response, ServiceError> {
    let kind: AnalysisKind = kind.parse()?;
    let params: Value = if body.iter().all(u8::is_ascii_whitespace) {
        Value::Null
    } else {
        serde_json::from_slice(&body).map_err(|e| ServiceError::BadRequest(format!("invalid parameters JSON: {e}")))?
    };
    let out = blocking(move || store.run_analysis(&id, kind, params)).await?;
    Ok((StatusCode::CREATED, Json(out)).into_response())
}

async fn get_analysis(State(store): State<Shared>, Path((id, analysis_id)): Path<(String, String)>) -> Result<Json<Value>, ServiceError> {
    Ok(Json(blocking(move || store.analysis_result(&id, &analysis_id)).await?))
}

async fn get_twin(State(store): State<Shared>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let bytes = blocking(move || store.twin_bytes(&id)).await?;
    Ok(json_bytes(StatusCode::OK, bytes))
}

async fn get_manifest(State(store): State<Shared>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let m = blocking(move || store.manifest(&id)).await?;
    Ok(Json(m).into_response())
}

async fn get_graph(State(store): State<Shared>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let g = blocking(move || store.graph(&id)).await?;
    Ok(Json(g).into_response())
}

async fn get_risk(State(store): State<Shared>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let r = blocking(move || store.risk(&id)).await?;
    Ok(Json(r).into_response())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct WhatIfRequest {
    #[serde(default)]
    overrides: BTreeMap<String, f64>,
}

async fn what_if(State(store): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<Response, ServiceError> {
    let req: WhatIfRequest = if body.iter().all(u8::is_ascii_whitespace) {
        WhatIfRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ServiceError::BadRequest(format!("expected {{\"overrides\": {{name: value}}}}: {e}")))?
    };
    let r = blocking(move || store.what_if(&id, &req.overrides)).await?;
    Ok(Json(r).into_response())
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn fallback() -> ServiceError {
    ServiceError::NotFound("route".into())
}

/// All routes, mounted under `prefix` (empty or `/api`-style).
pub fn router(store: PatientStore, prefix: &str) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/patients", post(create_patient).get(list_patients))
        .route("/patients/{id}/assets/{modality}", post(upload_asset))
        .route("/patients/{id}/analyses/{kind}", post(run_analysis).get(get_analysis))
        .route("/patients/{id}/twin", get(get_twin))
        .route("/patients/{id}/manifest", get(get_manifest))
        .route("/patients/{id}/graph", get(get_graph))
        .route("/patients/{id}/risk", get(get_risk))
        .route("/patients/{id}/what-if", post(what_if))
        .fallback(fallback)
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(Arc::new(store));
    let prefix = prefix.trim_end_matches('/');
    if prefix.is_empty() {
        api
    } else {
        Router::new().nest(prefix, api).fallback(fallback)
    }
}

/// Serves until Ctrl-C. `on_bound` receives the actual address (useful with
/// port 0).
pub async fn serve(store: PatientStore, addr: SocketAddr, prefix: &str, on_bound: impl FnOnce(SocketAddr)) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, router(store, prefix))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
