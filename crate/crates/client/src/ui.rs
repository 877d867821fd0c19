//! Localhost JSON API for the caregiver console. Responses carry decrypted
//! artifacts only; no key material or ciphertext leaves this process.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use voxsearch_core::api::{ErrorBody, ErrorDetail};
use voxsearch_core::evaluation::Label;
use voxsearch_core::matching::{sweep_csv, MatchError, Thresholds};

use crate::caregiver::{
    Caregiver, CaregiverError, ClassifiedRecord, QuerySession, QuerySource, SweepLevel,
};

pub struct UiState {
    caregiver: Caregiver,
    sessions: RwLock<HashMap<String, Arc<QuerySession>>>,
}

impl UiState {
    pub fn new(caregiver: Caregiver) -> Arc<Self> {
        Arc::new(Self {
            caregiver,
            sessions: RwLock::new(HashMap::new()),
        })
    }
}

#[derive(Debug)]
pub struct UiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl UiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }
}

impl IntoResponse for UiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: ErrorDetail {
                code: self.code.into(),
                message: self.message,
            },
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<CaregiverError> for UiError {
    fn from(e: CaregiverError) -> Self {
        use CaregiverError as E;
        let (status, code) = match &e {
            E::UnknownRecord(_) => (StatusCode::NOT_FOUND, "UnknownRecord"),
            E::ThresholdsUnset => (StatusCode::CONFLICT, "ThresholdsUnset"),
            E::AuthFailure => (StatusCode::BAD_GATEWAY, "AuthFailure"),
            E::MalformedBlob(_) => (StatusCode::BAD_GATEWAY, "MalformedBlob"),
            E::Remote(_) => (StatusCode::BAD_GATEWAY, "ServerError"),
            E::ParamMismatch => (StatusCode::BAD_GATEWAY, "ParamMismatch"),
            E::Protocol(_) => (StatusCode::BAD_REQUEST, "BadAudio"),
            E::Match(MatchError::InsufficientLabels(_)) => (StatusCode::CONFLICT, "InsufficientLabels"),
            E::Match(_) => (StatusCode::BAD_REQUEST, "InvalidThresholds"),
            E::KeyFile(_) | E::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "LocalFailure"),
        };
        UiError::new(status, code, e.to_string())
    }
}

impl From<JsonRejection> for UiError {
    fn from(e: JsonRejection) -> Self {
        UiError::new(StatusCode::BAD_REQUEST, "BadRequest", e.body_text())
    }
}

type UiResult<T> = Result<T, UiError>;
type AppState = State<Arc<UiState>>;

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionResponse {
    pub session_id: String,
    pub thresholds: Thresholds,
    pub results: Vec<ClassifiedRecord>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct QueryBody {
    #[serde(default)]
    pub record_id: Option<String>,
    /// Base64 WAV bytes of a new recording.
    #[serde(default)]
    pub upload: Option<String>,
    #[serde(default)]
    pub tm: Option<f64>,
    #[serde(default)]
    pub tw: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FetchBody {
    pub ids: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FetchItem {
    Audio { record_id: String, audio_b64: String },
    Failed { record_id: String, error: ErrorDetail },
}

#[derive(Debug, Deserialize)]
struct SweepParams {
    #[serde(default)]
    level: SweepLevel,
}

fn thresholds_from(tm: Option<f64>, tw: Option<f64>, ui: &UiState) -> UiResult<Thresholds> {
    match (tm, tw) {
        (Some(tm), Some(tw)) => Ok(Thresholds::new(tm, tw).map_err(CaregiverError::from)?),
        (None, None) => Ok(ui.caregiver.require_thresholds()?),
        _ => Err(UiError::new(
            StatusCode::BAD_REQUEST,
            "InvalidThresholds",
            "supply both tm and tw or neither",
        )),
    }
}

fn session_response(s: &QuerySession, t: Thresholds) -> SessionResponse {
    SessionResponse {
        session_id: s.session_id.clone(),
        thresholds: t,
        results: s.classify(&t),
    }
}

async fn records(State(ui): AppState) -> UiResult<impl IntoResponse> {
    Ok(Json(ui.caregiver.list_records().await?))
}

async fn label(
    State(ui): AppState,
    Path(id): Path<String>,
    body: Result<Json<Label>, JsonRejection>,
) -> UiResult<impl IntoResponse> {
    let Json(label) = body?;
    ui.caregiver.set_label(&id, label.clone()).await?;
    Ok(Json(serde_json::json!({ "record_id": id, "label": label })))
}

async fn audio(State(ui): AppState, Path(id): Path<String>) -> UiResult<impl IntoResponse> {
    let bytes = ui.caregiver.fetch_audio(&id).await?;
    Ok(([(header::CONTENT_TYPE, "audio/wav")], bytes))
}

async fn query(
    State(ui): AppState,
    body: Result<Json<QueryBody>, JsonRejection>,
) -> UiResult<Json<SessionResponse>> {
    let Json(body) = body?;
    let t = thresholds_from(body.tm, body.tw, &ui)?;
    let source = match (body.record_id, body.upload) {
        (Some(id), None) => QuerySource::Record(id),
        (None, Some(b64)) => QuerySource::Wav(B64.decode(b64.trim()).map_err(|e| {
            UiError::new(StatusCode::BAD_REQUEST, "BadRequest", format!("upload: {e}"))
        })?),
        _ => {
            return Err(UiError::new(
                StatusCode::BAD_REQUEST,
                "BadRequest",
                "give exactly one of record_id or upload",
            ))
        }
    };
    let session = Arc::new(ui.caregiver.run_query(&source, t).await?);
    let resp = session_response(&session, t);
    ui.sessions
        .write()
        .expect("sessions lock")
        .insert(session.session_id.clone(), session);
    Ok(Json(resp))
}

async fn reclassify(
    State(ui): AppState,
    Path(id): Path<String>,
    body: Result<Json<Thresholds>, JsonRejection>,
) -> UiResult<Json<SessionResponse>> {
    let Json(t) = body?;
    let t = Thresholds::new(t.tm, t.tw).map_err(CaregiverError::from)?;
    let session = ui
        .sessions
        .read()
        .expect("sessions lock")
        .get(&id)
        .cloned()
        .ok_or_else(|| UiError::new(StatusCode::NOT_FOUND, "UnknownSession", format!("no session {id}")))?;
    Ok(Json(session_response(&session, t)))
}

async fn get_thresholds(State(ui): AppState) -> UiResult<Json<Thresholds>> {
    Ok(Json(ui.caregiver.require_thresholds().map_err(|e| match e {
        CaregiverError::ThresholdsUnset => {
            UiError::new(StatusCode::NOT_FOUND, "ThresholdsUnset", e.to_string())
        }
        other => other.into(),
    })?))
}

async fn put_thresholds(
    State(ui): AppState,
    body: Result<Json<Thresholds>, JsonRejection>,
) -> UiResult<Json<Thresholds>> {
    let Json(t) = body?;
    ui.caregiver.save_thresholds(&t)?;
    Ok(Json(t))
}

async fn sweep(State(ui): AppState, Query(p): Query<SweepParams>) -> UiResult<impl IntoResponse> {
    let points = match ui.caregiver.sweep(p.level).await {
        Ok(points) => points,
        Err(CaregiverError::Match(MatchError::InsufficientLabels(_))) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    Ok(([(header::CONTENT_TYPE, "text/csv")], sweep_csv(&points)))
}

async fn fetch(
    State(ui): AppState,
    body: Result<Json<FetchBody>, JsonRejection>,
) -> UiResult<impl IntoResponse> {
    let Json(body) = body?;
    let items: Vec<FetchItem> = ui
        .caregiver
        .fetch_many(&body.ids)
        .await?
        .into_iter()
        .map(|(record_id, r)| match r {
            Ok(bytes) => FetchItem::Audio {
                record_id,
                audio_b64: B64.encode(bytes),
            },
            Err(e) => {
                let ui_err = UiError::from(e);
                FetchItem::Failed {
                    record_id,
                    error: ErrorDetail {
                        code: ui_err.code.into(),
                        message: ui_err.message,
                    },
                }
            }
        })
        .collect();
    Ok(Json(serde_json::json!({ "results": items })))
}

async fn not_found(_body: Bytes) -> UiError {
    UiError::new(StatusCode::NOT_FOUND, "NotFound", "no such route")
}

pub fn router(state: Arc<UiState>) -> Router {
    Router::new()
        .route("/ui/records", get(records))
        .route("/ui/records/{id}/label", post(label))
        .route("/ui/records/{id}/audio", get(audio))
        .route("/ui/query", post(query))
        .route("/ui/thresholds", get(get_thresholds).put(put_thresholds))
        .route("/ui/sessions/{id}/reclassify", post(reclassify))
        .route("/ui/sweep.csv", get(sweep))
        .route("/ui/fetch", post(fetch))
        .fallback(not_found)
        .layer(DefaultBodyLimit::max(64 * 1024 * 1024))
        .with_state(state)
}

pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<UiState>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}
