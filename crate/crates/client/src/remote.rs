//! Typed HTTP client for the record server.

use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;
use voxsearch_core::api::{
    CreateRecordRequest, CreateRecordResponse, ErrorBody, FetchBlobsRequest, FetchBlobsResponse,
    FetchedBlob, ListFilter, ListRecordsResponse, QueryRequest, QueryResponse, QueryResult,
    RecordSummary,
};
use voxsearch_core::ringhe::{Ciphertext, HeParams};

#[derive(Debug, Error)]
pub enum RemoteError {
    #[error("network error: {0}")]
    Network(#[from] reqwest::Error),
    #[error("server returned {status} {code}: {message}")]
    Api {
        status: u16,
        code: String,
        message: String,
    },
}

#[derive(Debug, Clone)]
pub struct ServerClient {
    base: String,
    http: reqwest::Client,
}

impl ServerClient {
    pub fn new(base_url: &str) -> Self {
        Self {
            base: base_url.trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, RemoteError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await.unwrap_or_default();
        Err(match serde_json::from_str::<ErrorBody>(&text) {
            Ok(body) => RemoteError::Api {
                status: status.as_u16(),
                code: body.error.code,
                message: body.error.message,
            },
            Err(_) => RemoteError::Api {
                status: status.as_u16(),
                code: status
                    .canonical_reason()
                    .unwrap_or(StatusCode::INTERNAL_SERVER_ERROR.as_str())
                    .into(),
                message: text,
            },
        })
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, RemoteError> {
        let resp = self.http.post(format!("{}{path}", self.base)).json(body).send().await?;
        Self::decode(resp).await
    }

    pub async fn params(&self) -> Result<HeParams, RemoteError> {
        let resp = self.http.get(format!("{}/v1/params", self.base)).send().await?;
        Self::decode(resp).await
    }

    pub async fn put_record(&self, req: &CreateRecordRequest) -> Result<String, RemoteError> {
        let r: CreateRecordResponse = self.post("/v1/records", req).await?;
        Ok(r.record_id)
    }

    pub async fn list_records(&self, filter: &ListFilter) -> Result<Vec<RecordSummary>, RemoteError> {
        let mut url = reqwest::Url::parse(&format!("{}/v1/records", self.base))
            .map_err(|e| RemoteError::Api {
                status: 0,
                code: "BadUrl".into(),
                message: e.to_string(),
            })?;
        {
            let mut q = url.query_pairs_mut();
            if let Some(d) = &filter.device_id {
                q.append_pair("device_id", d);
            }
            if let Some(t) = filter.from {
                q.append_pair("from", &t.to_rfc3339());
            }
            if let Some(t) = filter.to {
                q.append_pair("to", &t.to_rfc3339());
            }
        }
        let resp = self.http.get(url).send().await?;
        let r: ListRecordsResponse = Self::decode(resp).await?;
        Ok(r.records)
    }

    pub async fn query(&self, features: Vec<Ciphertext>) -> Result<Vec<QueryResult>, RemoteError> {
        let r: QueryResponse = self.post("/v1/query", &QueryRequest { features }).await?;
        Ok(r.results)
    }

    pub async fn fetch_blobs(&self, ids: &[String]) -> Result<Vec<FetchedBlob>, RemoteError> {
        let r: FetchBlobsResponse = self
            .post("/v1/blobs:fetch", &FetchBlobsRequest { ids: ids.to_vec() })
            .await?;
        Ok(r.blobs)
    }
}
