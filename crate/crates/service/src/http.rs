use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use crate::service::ValidationService;
use crate::ServiceError;

type Shared = Arc<ValidationService>;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::Unauthorized => StatusCode::UNAUTHORIZED,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Invalid(_) | ServiceError::NotIssued(_) => StatusCode::BAD_REQUEST,
            ServiceError::Conflict { .. } => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

#[derive(Deserialize)]
struct NewSession {
    language: String,
    proficiency: i64,
}

#[derive(Deserialize)]
struct NewLabel {
    segment_id: String,
    verdict: String,
}

async fn languages(State(svc): State<Shared>) -> Response {
    let list: Vec<_> = svc
        .languages()
        .into_iter()
        .map(|(language, clips, labels)| json!({ "language": language, "clips": clips, "labels": labels }))
        .collect();
    Json(list).into_response()
}

async fn create_session(State(svc): State<Shared>, headers: HeaderMap, Json(body): Json<NewSession>) -> Response {
    let proficiency = u8::try_from(body.proficiency).unwrap_or(0);
    match svc.create_session(bearer(&headers), &body.language, proficiency) {
        Ok(s) => (StatusCode::CREATED, Json(s)).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn next_clips(State(svc): State<Shared>, headers: HeaderMap, Path(id): Path<String>) -> Response {
    match svc.next_clips(bearer(&headers), &id) {
        Ok(batch) => {
            let clips: Vec<_> = batch
                .clips
                .iter()
                .map(|c| json!({ "segment_id": c, "audio_url": format!("/clips/{c}/audio") }))
                .collect();
            Json(json!({ "clips": clips, "exhausted": batch.exhausted })).into_response()
        }
        Err(e) => e.into_response(),
    }
}

async fn submit_label(
    State(svc): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Json(body): Json<NewLabel>,
) -> Response {
    match svc.submit_label(bearer(&headers), &id, &body.segment_id, &body.verdict) {
        Ok(label) => (StatusCode::CREATED, Json(label)).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn stats(State(svc): State<Shared>, Path(language): Path<String>) -> Response {
    match svc.language_stats(&language) {
        Ok(s) => Json(s).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn clip_audio(State(svc): State<Shared>, Path(segment_id): Path<String>) -> Response {
    let svc = svc.clone();
    match tokio::task::spawn_blocking(move || svc.catalog().audio(&segment_id)).await {
        Ok(Ok(bytes)) => ([(header::CONTENT_TYPE, "audio/wav")], bytes).into_response(),
        Ok(Err(e)) => e.into_response(),
        Err(e) => ServiceError::Io(std::io::Error::other(e)).into_response(),
    }
}

pub fn router(service: Arc<ValidationService>) -> Router {
    Router::new()
        .route("/languages", get(languages))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/clips", get(next_clips))
        .route("/sessions/{id}/labels", post(submit_label))
        .route("/stats/{language}", get(stats))
        .route("/clips/{segment_id}/audio", get(clip_audio))
        .with_state(service)
}

/// Serves until ctrl-c.
pub async fn serve(service: Arc<ValidationService>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
