//! JSON bodies of the record server's HTTP API.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::blobcrypt::SealedBlobJson;
use crate::ringhe::Ciphertext;

pub type Meta = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateRecordRequest {
    pub device_id: String,
    #[serde(default)]
    pub meta: Meta,
    pub blob: SealedBlobJson,
    pub features: Vec<Ciphertext>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateRecordResponse {
    pub record_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordSummary {
    pub record_id: String,
    pub device_id: String,
    pub created_at: DateTime<Utc>,
    pub meta: Meta,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListRecordsResponse {
    pub records: Vec<RecordSummary>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRequest {
    pub features: Vec<Ciphertext>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub record_id: String,
    pub distance: Ciphertext,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub results: Vec<QueryResult>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchBlobsRequest {
    pub ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FetchedBlob {
    Found {
        record_id: String,
        #[serde(flatten)]
        blob: SealedBlobJson,
    },
    Missing {
        record_id: String,
        error: ErrorDetail,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchBlobsResponse {
    pub blobs: Vec<FetchedBlob>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

pub mod codes {
    pub const MALFORMED_RECORD: &str = "MalformedRecord";
    pub const PARAM_MISMATCH: &str = "ParamMismatch";
    pub const UNKNOWN_RECORD: &str = "UnknownRecord";
    pub const STORAGE_FAILURE: &str = "StorageFailure";
    pub const BAD_REQUEST: &str = "BadRequest";
}
