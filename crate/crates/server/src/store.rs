//! Directory-backed record store.
//!
//! Layout under the root:
//! - `store.json`: public HE parameters, fixed at creation.
//! - `blobs/<id>.bin`: sealed audio as `nonce || ciphertext || tag`.
//! - `records/<id>.json`: metadata plus the 36 feature ciphertexts.
//! - `index.json`: the list of committed records.
//!
//! A put writes the blob, then the record, then the index, each by
//! temp-file-then-rename. A record exists iff the index names it, so a crash
//! at any point leaves either no record or a complete one.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use voxsearch_core::api::{
    codes, CreateRecordRequest, ErrorDetail, FetchedBlob, ListFilter, Meta, QueryResult,
    RecordSummary,
};
use voxsearch_core::blobcrypt::{SealedBlob, SealedBlobJson};
use voxsearch_core::fsutil::{is_temp_name, write_atomic};
use voxsearch_core::matching::encrypted_distance;
use voxsearch_core::mfcc::FEATURE_DIM;
use voxsearch_core::ringhe::{Ciphertext, HeContext, HeError, HeParams};

const STORE_FILE: &str = "store.json";
const INDEX_FILE: &str = "index.json";
const RECORDS_DIR: &str = "records";
const BLOBS_DIR: &str = "blobs";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage failure: {0}")]
    Storage(String),
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("parameter mismatch: {0}")]
    ParamMismatch(String),
    #[error("unknown record {0}")]
    UnknownRecord(String),
}

impl From<io::Error> for StoreError {
    fn from(e: io::Error) -> Self {
        StoreError::Storage(e.to_string())
    }
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::Storage(_) => codes::STORAGE_FAILURE,
            StoreError::Malformed(_) => codes::MALFORMED_RECORD,
            StoreError::ParamMismatch(_) => codes::PARAM_MISMATCH,
            StoreError::UnknownRecord(_) => codes::UNKNOWN_RECORD,
        }
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Stops a put after a given step, leaving files as a crash would.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailPoint {
    AfterBlob,
    AfterRecord,
}

#[derive(Debug, Serialize, Deserialize)]
struct StoreConfig {
    params: HeParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexEntry {
    record_id: String,
    device_id: String,
    created_at: DateTime<Utc>,
    meta: Meta,
    key_id: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct IndexFile {
    records: Vec<IndexEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordFile {
    record_id: String,
    device_id: String,
    created_at: DateTime<Utc>,
    meta: Meta,
    key_id: String,
    features: Vec<Ciphertext>,
}

#[derive(Default)]
struct State {
    index: Vec<IndexEntry>,
    features: HashMap<String, Arc<Vec<Ciphertext>>>,
}

pub struct Store {
    root: PathBuf,
    ctx: HeContext,
    state: RwLock<State>,
    writer: Mutex<Option<FailPoint>>,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("root", &self.root).finish_non_exhaustive()
    }
}

fn valid_id(id: &str) -> bool {
    id.len() == 32 && id.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
}

fn new_record_id() -> String {
    let v: u128 = rand::rng().random();
    format!("{v:032x}")
}

impl Store {
    /// Initializes an empty store. Fails if `root` already holds one.
    pub fn create(root: &Path, params: HeParams) -> Result<Self, StoreError> {
        let ctx = HeContext::new(params.clone())
            .map_err(|e| StoreError::ParamMismatch(e.to_string()))?;
        if root.join(STORE_FILE).exists() {
            return Err(StoreError::Storage(format!(
                "{} already contains a store",
                root.display()
            )));
        }
        fs::create_dir_all(root.join(RECORDS_DIR))?;
        fs::create_dir_all(root.join(BLOBS_DIR))?;
        let cfg = serde_json::to_vec_pretty(&StoreConfig { params }).expect("serializable");
        write_atomic(&root.join(STORE_FILE), &cfg, None)?;
        Ok(Self::with_state(root, ctx, State::default()))
    }

    pub fn open(root: &Path) -> Result<Self, StoreError> {
        let cfg: StoreConfig = serde_json::from_slice(&fs::read(root.join(STORE_FILE))?)
            .map_err(|e| StoreError::Storage(format!("store.json: {e}")))?;
        let ctx = HeContext::new(cfg.params)
            .map_err(|e| StoreError::Storage(format!("store.json: {e}")))?;
        let index: IndexFile = match fs::read(root.join(INDEX_FILE)) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| StoreError::Storage(format!("index.json: {e}")))?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => IndexFile::default(),
            Err(e) => return Err(e.into()),
        };
        fs::create_dir_all(root.join(RECORDS_DIR))?;
        fs::create_dir_all(root.join(BLOBS_DIR))?;

        let mut features = HashMap::with_capacity(index.records.len());
        for entry in &index.records {
            let rec = read_record(root, &entry.record_id)?;
            check_features(&ctx, &rec.features).map_err(|e| {
                StoreError::Storage(format!("record {}: {e}", entry.record_id))
            })?;
            if !blob_path(root, &entry.record_id).is_file() {
                return Err(StoreError::Storage(format!(
                    "record {} has no blob",
                    entry.record_id
                )));
            }
            features.insert(entry.record_id.clone(), Arc::new(rec.features));
        }
        Ok(Self::with_state(
            root,
            ctx,
            State {
                index: index.records,
                features,
            },
        ))
    }

    pub fn open_or_create(root: &Path, params: HeParams) -> Result<Self, StoreError> {
        if root.join(STORE_FILE).exists() {
            let store = Self::open(root)?;
            if store.params() != &params {
                return Err(StoreError::ParamMismatch(
                    "existing store has different parameters".into(),
                ));
            }
            Ok(store)
        } else {
            Self::create(root, params)
        }
    }

    fn with_state(root: &Path, ctx: HeContext, state: State) -> Self {
        Self {
            root: root.to_path_buf(),
            ctx,
            state: RwLock::new(state),
            writer: Mutex::new(None),
            clock: Arc::new(SystemClock),
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    #[doc(hidden)]
    pub fn set_failpoint(&self, fp: Option<FailPoint>) {
        *self.writer.lock().expect("writer lock") = fp;
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn params(&self) -> &HeParams {
        self.ctx.params()
    }

    pub fn len(&self) -> usize {
        self.state.read().expect("state lock").index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Removes temp files and files not named by the index.
    pub fn sweep_orphans(&self) -> Result<usize, StoreError> {
        let _w = self.writer.lock().expect("writer lock");
        let state = self.state.read().expect("state lock");
        let mut removed = 0;
        for (dir, ext) in [(RECORDS_DIR, "json"), (BLOBS_DIR, "bin")] {
            for entry in fs::read_dir(self.root.join(dir))? {
                let entry = entry?;
                let name = entry.file_name().to_string_lossy().into_owned();
                let id = name.strip_suffix(&format!(".{ext}"));
                let live = id.is_some_and(|id| state.features.contains_key(id));
                if is_temp_name(&name) || !live {
                    fs::remove_file(entry.path())?;
                    removed += 1;
                }
            }
        }
        for entry in fs::read_dir(&self.root)? {
            let entry = entry?;
            if is_temp_name(&entry.file_name().to_string_lossy()) {
                fs::remove_file(entry.path())?;
                removed += 1;
            }
        }
        Ok(removed)
    }

    pub fn put(&self, req: CreateRecordRequest) -> Result<String, StoreError> {
        if req.device_id.is_empty() {
            return Err(StoreError::Malformed("device_id is empty".into()));
        }
        check_features(&self.ctx, &req.features)?;
        let blob = SealedBlob::try_from(&req.blob)
            .map_err(|e| StoreError::Malformed(e.to_string()))?;

        let failpoint = self.writer.lock().expect("writer lock");
        let record_id = loop {
            let id = new_record_id();
            if !self.state.read().expect("state lock").features.contains_key(&id) {
                break id;
            }
        };
        let entry = IndexEntry {
            record_id: record_id.clone(),
            device_id: req.device_id,
            created_at: self.clock.now(),
            meta: req.meta,
            key_id: blob.key_id.clone(),
        };

        write_atomic(&blob_path(&self.root, &record_id), &blob.to_bytes(), None)?;
        if *failpoint == Some(FailPoint::AfterBlob) {
            return Err(StoreError::Storage("failpoint after blob".into()));
        }

        let rec = RecordFile {
            record_id: record_id.clone(),
            device_id: entry.device_id.clone(),
            created_at: entry.created_at,
            meta: entry.meta.clone(),
            key_id: entry.key_id.clone(),
            features: req.features,
        };
        let rec_bytes = serde_json::to_vec(&rec).expect("serializable");
        write_atomic(&record_path(&self.root, &record_id), &rec_bytes, None)?;
        if *failpoint == Some(FailPoint::AfterRecord) {
            return Err(StoreError::Storage("failpoint after record".into()));
        }

        let mut records = self.state.read().expect("state lock").index.clone();
        records.push(entry);
        let index_bytes = serde_json::to_vec(&IndexFile { records }).expect("serializable");
        write_atomic(&self.root.join(INDEX_FILE), &index_bytes, None)?;

        let mut state = self.state.write().expect("state lock");
        state.index.push(IndexFile::last_entry(&index_bytes));
        state.features.insert(record_id.clone(), Arc::new(rec.features));
        tracing::info!(record_id = %record_id, blob_bytes = blob.ciphertext.len(), "stored record");
        Ok(record_id)
    }

    /// Metadata only, ordered by `created_at` then `record_id`.
    pub fn list(&self, filter: &ListFilter) -> Vec<RecordSummary> {
        let state = self.state.read().expect("state lock");
        let mut out: Vec<RecordSummary> = state
            .index
            .iter()
            .filter(|e| filter.device_id.as_ref().is_none_or(|d| &e.device_id == d))
            .filter(|e| filter.from.is_none_or(|f| e.created_at >= f))
            .filter(|e| filter.to.is_none_or(|t| e.created_at <= t))
            .map(|e| RecordSummary {
                record_id: e.record_id.clone(),
                device_id: e.device_id.clone(),
                created_at: e.created_at,
                meta: e.meta.clone(),
            })
            .collect();
        out.sort_by(|a, b| {
            a.created_at
                .cmp(&b.created_at)
                .then_with(|| a.record_id.cmp(&b.record_id))
        });
        out
    }

    /// One encrypted distance per stored record, ordered by `record_id`.
    /// Reads nothing from disk and writes nothing.
    pub fn query(&self, features: &[Ciphertext]) -> Result<Vec<QueryResult>, StoreError> {
        check_features(&self.ctx, features)?;
        let mut snapshot: Vec<(String, Arc<Vec<Ciphertext>>)> = self
            .state
            .read()
            .expect("state lock")
            .features
            .iter()
            .map(|(id, f)| (id.clone(), Arc::clone(f)))
            .collect();
        snapshot.sort_by(|a, b| a.0.cmp(&b.0));
        let results = snapshot
            .into_par_iter()
            .map(|(record_id, stored)| {
                let distance = encrypted_distance(&self.ctx, features, &stored)
                    .map_err(|e| StoreError::ParamMismatch(e.to_string()))?;
                Ok(QueryResult {
                    record_id,
                    distance,
                })
            })
            .collect::<Result<Vec<_>, StoreError>>()?;
        tracing::info!(records = results.len(), "answered query");
        Ok(results)
    }

    pub fn fetch_blobs(&self, ids: &[String]) -> Vec<FetchedBlob> {
        let key_ids: HashMap<String, String> = {
            let state = self.state.read().expect("state lock");
            ids.iter()
                .filter_map(|id| {
                    state
                        .index
                        .iter()
                        .find(|e| &e.record_id == id)
                        .map(|e| (id.clone(), e.key_id.clone()))
                })
                .collect()
        };
        ids.iter()
            .map(|id| {
                let fail = |code: &str, message: String| FetchedBlob::Missing {
                    record_id: id.clone(),
                    error: ErrorDetail {
                        code: code.into(),
                        message,
                    },
                };
                let Some(key_id) = key_ids.get(id) else {
                    return fail(codes::UNKNOWN_RECORD, format!("unknown record {id}"));
                };
                match fs::read(blob_path(&self.root, id))
                    .map_err(|e| e.to_string())
                    .and_then(|b| SealedBlob::from_bytes(&b, key_id.clone()).map_err(|e| e.to_string()))
                {
                    Ok(blob) => FetchedBlob::Found {
                        record_id: id.clone(),
                        blob: SealedBlobJson::from(&blob),
                    },
                    Err(e) => fail(codes::STORAGE_FAILURE, e),
                }
            })
            .collect()
    }
}

impl IndexFile {
    fn last_entry(bytes: &[u8]) -> IndexEntry {
        let f: IndexFile = serde_json::from_slice(bytes).expect("just serialized");
        f.records.into_iter().last().expect("non-empty")
    }
}

fn record_path(root: &Path, id: &str) -> PathBuf {
    root.join(RECORDS_DIR).join(format!("{id}.json"))
}

fn blob_path(root: &Path, id: &str) -> PathBuf {
    root.join(BLOBS_DIR).join(format!("{id}.bin"))
}

fn read_record(root: &Path, id: &str) -> Result<RecordFile, StoreError> {
    if !valid_id(id) {
        return Err(StoreError::Storage(format!("invalid record id {id:?} in index")));
    }
    let bytes = fs::read(record_path(root, id))?;
    let rec: RecordFile = serde_json::from_slice(&bytes)
        .map_err(|e| StoreError::Storage(format!("record {id}: {e}")))?;
    if rec.record_id != id {
        return Err(StoreError::Storage(format!("record file {id} names {}", rec.record_id)));
    }
    Ok(rec)
}

fn check_features(ctx: &HeContext, features: &[Ciphertext]) -> Result<(), StoreError> {
    if features.len() != FEATURE_DIM {
        return Err(StoreError::Malformed(format!(
            "expected {FEATURE_DIM} feature ciphertexts, got {}",
            features.len()
        )));
    }
    features.iter().try_for_each(|c| {
        ctx.check(c).map_err(|e| match e {
            HeError::ParamMismatch(m) => StoreError::ParamMismatch(m),
            other => StoreError::Malformed(other.to_string()),
        })
    })
}
