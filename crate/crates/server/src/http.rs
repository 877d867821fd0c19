//! HTTP/JSON routes over a [`Store`].

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use voxsearch_core::api::{
    codes, CreateRecordRequest, CreateRecordResponse, ErrorBody, ErrorDetail, FetchBlobsRequest,
    FetchBlobsResponse, ListFilter, ListRecordsResponse, QueryRequest, QueryResponse,
};
use voxsearch_core::ringhe::HeParams;

use crate::store::{Store, StoreError};

/// Uploads carry 36 ciphertexts of several megabytes in total plus audio.
pub const MAX_BODY_BYTES: usize = 512 * 1024 * 1024;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    detail: ErrorDetail,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            detail: ErrorDetail {
                code: code.into(),
                message: message.into(),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.detail })).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
            StoreError::Malformed(_) => StatusCode::BAD_REQUEST,
            StoreError::ParamMismatch(_) => StatusCode::UNPROCESSABLE_ENTITY,
            StoreError::UnknownRecord(_) => StatusCode::NOT_FOUND,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(e.status(), codes::BAD_REQUEST, e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, codes::BAD_REQUEST, e.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, StoreError> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, codes::STORAGE_FAILURE, e.to_string()))?
        .map_err(ApiError::from)
}

async fn create_record(
    State(store): State<Arc<Store>>,
    body: Result<Json<CreateRecordRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<CreateRecordResponse>)> {
    let Json(req) = body?;
    let record_id = blocking(move || store.put(req)).await?;
    Ok((StatusCode::CREATED, Json(CreateRecordResponse { record_id })))
}

async fn list_records(
    State(store): State<Arc<Store>>,
    filter: Result<Query<ListFilter>, QueryRejection>,
) -> ApiResult<Json<ListRecordsResponse>> {
    let Query(filter) = filter?;
    Ok(Json(ListRecordsResponse {
        records: store.list(&filter),
    }))
}

async fn query(
    State(store): State<Arc<Store>>,
    body: Result<Json<QueryRequest>, JsonRejection>,
) -> ApiResult<Json<QueryResponse>> {
    let Json(req) = body?;
    let results = blocking(move || store.query(&req.features)).await?;
    Ok(Json(QueryResponse { results }))
}

async fn fetch_blobs(
    State(store): State<Arc<Store>>,
    body: Result<Json<FetchBlobsRequest>, JsonRejection>,
) -> ApiResult<Json<FetchBlobsResponse>> {
    let Json(req) = body?;
    tracing::info!(ids = req.ids.len(), "fetching blobs");
    let blobs = blocking(move || Ok(store.fetch_blobs(&req.ids))).await?;
    Ok(Json(FetchBlobsResponse { blobs }))
}

async fn params(State(store): State<Arc<Store>>) -> Json<HeParams> {
    Json(store.params().clone())
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such route")
}

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/v1/records", post(create_record).get(list_records))
        .route("/v1/query", post(query))
        .route("/v1/blobs:fetch", post(fetch_blobs))
        .route("/v1/params", get(params))
        .fallback(not_found)
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(store)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    store: Arc<Store>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(store))
        .with_graceful_shutdown(shutdown)
        .await
}
