//! Caregiver side: browse, open sealed audio, label, query, classify and
//! evaluate. All decryption happens here.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use voxsearch_core::api::{FetchedBlob, ListFilter, RecordSummary};
use voxsearch_core::blobcrypt::{open, BlobError, SealedBlob};
use voxsearch_core::evaluation::{build_pairs, evaluate_pairs, EvaluationReport, Label, PairSample};
use voxsearch_core::fsutil::write_atomic;
use voxsearch_core::keyfile::{KeyFileError, Keys};
use voxsearch_core::matching::{
    classify, learn_thresholds, threshold_sweep, MatchClass, MatchError, SweepPoint, Thresholds,
};
use voxsearch_core::mfcc::FeatureVector;
use voxsearch_core::protocol::{decrypt_distance, encrypt_features, features_from_wav, ProtocolError};

use crate::config::ClientConfig;
use crate::labels::LabelStore;
use crate::remote::{RemoteError, ServerClient};

#[derive(Debug, Error)]
pub enum CaregiverError {
    #[error(transparent)]
    KeyFile(#[from] KeyFileError),
    #[error(transparent)]
    Remote(#[from] RemoteError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("sealed audio failed authentication")]
    AuthFailure,
    #[error("malformed blob: {0}")]
    MalformedBlob(String),
    #[error("unknown record {0}")]
    UnknownRecord(String),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error("thresholds are not set; learn or supply T_m and T_w first")]
    ThresholdsUnset,
    #[error("server parameters differ from the key file parameters")]
    ParamMismatch,
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl From<BlobError> for CaregiverError {
    fn from(e: BlobError) -> Self {
        match e {
            BlobError::AuthFailure => CaregiverError::AuthFailure,
            other => CaregiverError::MalformedBlob(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordView {
    #[serde(flatten)]
    pub summary: RecordSummary,
    pub label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub record_id: String,
    /// Decrypted squared distance in feature units.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedRecord {
    pub record_id: String,
    pub distance: f64,
    pub class: MatchClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum QuerySource {
    Record(String),
    Wav(Vec<u8>),
}

/// Immutable result of one server round trip. Reclassifying under other
/// thresholds is local.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySession {
    pub session_id: String,
    /// Ascending by distance, ties by record id.
    pub results: Vec<ScoredRecord>,
    pub thresholds: Thresholds,
}

impl QuerySession {
    pub fn classify(&self, t: &Thresholds) -> Vec<ClassifiedRecord> {
        self.results
            .iter()
            .map(|r| ClassifiedRecord {
                record_id: r.record_id.clone(),
                distance: r.distance,
                class: classify(r.distance, t),
            })
            .collect()
    }

    pub fn classified(&self) -> Vec<ClassifiedRecord> {
        self.classify(&self.thresholds)
    }
}

/// Which ground truth counts as positive in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepLevel {
    #[default]
    SameMood,
    SameWord,
}

impl std::str::FromStr for SweepLevel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "same-mood" => Ok(SweepLevel::SameMood),
            "same-word" => Ok(SweepLevel::SameWord),
            other => Err(format!("unknown sweep level {other:?}")),
        }
    }
}

pub fn sort_scored(results: &mut [ScoredRecord]) {
    results.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then_with(|| a.record_id.cmp(&b.record_id))
    });
}

pub struct Caregiver {
    config: ClientConfig,
    keys: Keys,
    server: ServerClient,
    labels: Mutex<LabelStore>,
}

impl std::fmt::Debug for Caregiver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Caregiver")
            .field("server", &self.server.base_url())
            .finish_non_exhaustive()
    }
}

impl Caregiver {
    pub fn open(config: ClientConfig) -> Result<Self, CaregiverError> {
        let keys = Keys::load(&config.key_file)?;
        let labels = LabelStore::load(&config.labels_file)?;
        let server = ServerClient::new(&config.server_url);
        Ok(Self {
            config,
            keys,
            server,
            labels: Mutex::new(labels),
        })
    }

    pub fn with_server(mut self, server: ServerClient) -> Self {
        self.server = server;
        self
    }

    pub fn server(&self) -> &ServerClient {
        &self.server
    }

    pub async fn check_params(&self) -> Result<(), CaregiverError> {
        if &self.server.params().await? != self.keys.params() {
            return Err(CaregiverError::ParamMismatch);
        }
        Ok(())
    }

    pub fn labels(&self) -> BTreeMap<String, Label> {
        self.labels.lock().expect("labels lock").all().clone()
    }

    pub async fn list_records(&self) -> Result<Vec<RecordView>, CaregiverError> {
        let records = self.server.list_records(&ListFilter::default()).await?;
        let labels = self.labels();
        Ok(records
            .into_iter()
            .map(|summary| RecordView {
                label: labels.get(&summary.record_id).cloned(),
                summary,
            })
            .collect())
    }

    /// Labels a record that exists on the server.
    pub async fn set_label(&self, id: &str, label: Label) -> Result<(), CaregiverError> {
        let known = self
            .server
            .list_records(&ListFilter::default())
            .await?
            .iter()
            .any(|r| r.record_id == id);
        if !known {
            return Err(CaregiverError::UnknownRecord(id.into()));
        }
        self.labels.lock().expect("labels lock").set(id, label)?;
        Ok(())
    }

    fn open_fetched(&self, fetched: FetchedBlob) -> (String, Result<Vec<u8>, CaregiverError>) {
        match fetched {
            FetchedBlob::Found { record_id, blob } => {
                let opened = SealedBlob::try_from(&blob)
                    .map_err(CaregiverError::from)
                    .and_then(|b| Ok(open(self.keys.blob_key(), &b)?));
                (record_id, opened)
            }
            FetchedBlob::Missing { record_id, error } => {
                let e = if error.code == voxsearch_core::api::codes::UNKNOWN_RECORD {
                    CaregiverError::UnknownRecord(record_id.clone())
                } else {
                    CaregiverError::MalformedBlob(error.message)
                };
                (record_id, Err(e))
            }
        }
    }

    /// Per-id original file bytes.
    pub async fn fetch_many(
        &self,
        ids: &[String],
    ) -> Result<Vec<(String, Result<Vec<u8>, CaregiverError>)>, CaregiverError> {
        let fetched = self.server.fetch_blobs(ids).await?;
        Ok(fetched.into_iter().map(|f| self.open_fetched(f)).collect())
    }

    pub async fn fetch_audio(&self, id: &str) -> Result<Vec<u8>, CaregiverError> {
        let mut out = self.fetch_many(&[id.to_string()]).await?;
        match out.pop() {
            Some((_, r)) => r,
            None => Err(CaregiverError::UnknownRecord(id.into())),
        }
    }

    /// Features recomputed from the record's own audio.
    pub async fn record_features(&self, id: &str) -> Result<FeatureVector, CaregiverError> {
        let bytes = self.fetch_audio(id).await?;
        Ok(features_from_wav(&bytes, &self.config.mfcc)?)
    }

    /// Decrypted distances from `v` to every stored record, ascending.
    pub async fn query_vector(&self, v: &FeatureVector) -> Result<Vec<ScoredRecord>, CaregiverError> {
        let ctx = self.keys.context();
        let enc = encrypt_features(ctx, &self.keys.pair().public, v, &mut rand::rng())?;
        let raw = self.server.query(enc).await?;
        let mut out = raw
            .iter()
            .map(|r| {
                Ok(ScoredRecord {
                    record_id: r.record_id.clone(),
                    distance: decrypt_distance(ctx, &self.keys.pair().secret, &r.distance)?,
                })
            })
            .collect::<Result<Vec<_>, ProtocolError>>()?;
        sort_scored(&mut out);
        Ok(out)
    }

    pub async fn run_query(
        &self,
        source: &QuerySource,
        thresholds: Thresholds,
    ) -> Result<QuerySession, CaregiverError> {
        let v = match source {
            QuerySource::Record(id) => self.record_features(id).await?,
            QuerySource::Wav(bytes) => features_from_wav(bytes, &self.config.mfcc)?,
        };
        Ok(QuerySession {
            session_id: uuid::Uuid::new_v4().to_string(),
            results: self.query_vector(&v).await?,
            thresholds,
        })
    }

    pub fn thresholds(&self) -> Result<Option<Thresholds>, CaregiverError> {
        match std::fs::read(&self.config.thresholds_file) {
            Ok(bytes) => {
                let t: Thresholds = serde_json::from_slice(&bytes)
                    .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
                Ok(Some(Thresholds::new(t.tm, t.tw)?))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn require_thresholds(&self) -> Result<Thresholds, CaregiverError> {
        self.thresholds()?.ok_or(CaregiverError::ThresholdsUnset)
    }

    pub fn save_thresholds(&self, t: &Thresholds) -> Result<(), CaregiverError> {
        let t = Thresholds::new(t.tm, t.tw)?;
        write_atomic(
            &self.config.thresholds_file,
            serde_json::to_string_pretty(&t).expect("serializable").as_bytes(),
            None,
        )?;
        Ok(())
    }

    /// Distances between every pair of `ids`, one query per record.
    pub async fn pair_distances(
        &self,
        ids: &[String],
    ) -> Result<HashMap<(String, String), f64>, CaregiverError> {
        let mut out = HashMap::new();
        let opened = self.fetch_many(ids).await?;
        for (i, (id, bytes)) in opened.into_iter().enumerate() {
            let v = features_from_wav(&bytes?, &self.config.mfcc)?;
            let scored = self.query_vector(&v).await?;
            let later: std::collections::HashSet<&String> = ids[i + 1..].iter().collect();
            for s in scored.into_iter().filter(|s| later.contains(&s.record_id)) {
                let key = if id <= s.record_id {
                    (id.clone(), s.record_id)
                } else {
                    (s.record_id, id.clone())
                };
                out.insert(key, s.distance);
            }
        }
        Ok(out)
    }

    /// All unordered pairs of labeled records with decrypted distances.
    pub async fn labeled_pairs(&self) -> Result<Vec<PairSample>, CaregiverError> {
        let labels = self.labels();
        let ids: Vec<String> = labels.keys().cloned().collect();
        let d = self.pair_distances(&ids).await?;
        Ok(build_pairs(&labels, |a, b| {
            let key = if a <= b { (a.to_string(), b.to_string()) } else { (b.to_string(), a.to_string()) };
            d.get(&key).copied()
        }))
    }

    /// Learns thresholds on all labeled pairs and persists them.
    pub async fn learn_thresholds(&self) -> Result<Thresholds, CaregiverError> {
        let pairs = self.labeled_pairs().await?;
        let labeled: Vec<(f64, MatchClass)> = pairs.iter().map(|p| (p.distance, p.truth)).collect();
        let t = learn_thresholds(&labeled)?;
        self.save_thresholds(&t)?;
        Ok(t)
    }

    pub async fn evaluate(&self, thresholds: Option<Thresholds>) -> Result<EvaluationReport, CaregiverError> {
        let pairs = self.labeled_pairs().await?;
        if pairs.is_empty() {
            return Err(MatchError::InsufficientLabels("need at least two labeled records".into()).into());
        }
        Ok(evaluate_pairs(&pairs, thresholds)?)
    }

    pub async fn sweep(&self, level: SweepLevel) -> Result<Vec<SweepPoint>, CaregiverError> {
        let pairs = self.labeled_pairs().await?;
        let points: Vec<(f64, bool)> = pairs
            .iter()
            .map(|p| {
                let positive = match level {
                    SweepLevel::SameMood => p.truth == MatchClass::SameWordSameMood,
                    SweepLevel::SameWord => p.truth.same_word(),
                };
                (p.distance, positive)
            })
            .collect();
        Ok(threshold_sweep(&points)?)
    }

    pub fn key_path(&self) -> &Path {
        &self.config.key_file
    }
}
