//! In-home device: WAV file to sealed blob plus encrypted feature vector,
//! uploaded to the record server.

use std::fs::{File, OpenOptions, TryLockError};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;
use voxsearch_core::api::{CreateRecordRequest, Meta};
use voxsearch_core::blobcrypt::{BlobError, SealedBlobJson, Sealer};
use voxsearch_core::keyfile::{KeyFileError, Keys};
use voxsearch_core::protocol::{encrypt_features, features_from_wav, ProtocolError};

use crate::config::ClientConfig;
use crate::remote::{RemoteError, ServerClient};

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("key file {0} is in use by another device process")]
    Busy(String),
    #[error(transparent)]
    KeyFile(#[from] KeyFileError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Blob(#[from] BlobError),
    #[error(transparent)]
    Remote(#[from] RemoteError),
    #[error("server parameters differ from the key file parameters")]
    ParamMismatch,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DeviceError + '_ {
    move |source| DeviceError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BatchItem {
    pub file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Holds an exclusive lock on `<key_file>.lock` for its lifetime, since
/// the persisted nonce counter cannot be shared between processes.
pub struct Device {
    config: ClientConfig,
    keys: Keys,
    key_path: PathBuf,
    server: ServerClient,
    params_checked: bool,
    _lock: File,
}

impl std::fmt::Debug for Device {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Device")
            .field("device_id", &self.config.device_id)
            .field("server", &self.server.base_url())
            .finish_non_exhaustive()
    }
}

pub fn lock_path(key_file: &Path) -> PathBuf {
    let mut name = key_file.as_os_str().to_owned();
    name.push(".lock");
    PathBuf::from(name)
}

impl Device {
    pub fn open(config: ClientConfig) -> Result<Self, DeviceError> {
        let key_path = config.key_file.clone();
        let lock_file = lock_path(&key_path);
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_file)
            .map_err(io_err(&lock_file))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(TryLockError::WouldBlock) => {
                return Err(DeviceError::Busy(key_path.display().to_string()))
            }
            Err(TryLockError::Error(e)) => return Err(io_err(&lock_file)(e)),
        }
        let keys = Keys::load(&key_path)?;
        let server = ServerClient::new(&config.server_url);
        Ok(Self {
            config,
            keys,
            key_path,
            server,
            params_checked: false,
            _lock: lock,
        })
    }

    pub fn with_server(mut self, server: ServerClient) -> Self {
        self.server = server;
        self.params_checked = false;
        self
    }

    /// Highest nonce counter consumed so far.
    pub fn nonce_counter(&self) -> Option<u64> {
        self.keys.nonce_counter
    }

    pub async fn ingest(&mut self, path: &Path) -> Result<String, DeviceError> {
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        self.ingest_bytes(&bytes, Meta::new()).await
    }

    /// Seals `bytes` as-is and uploads it with its encrypted features.
    pub async fn ingest_bytes(&mut self, bytes: &[u8], meta: Meta) -> Result<String, DeviceError> {
        let features = features_from_wav(bytes, &self.config.mfcc)?;
        if !self.params_checked {
            if &self.server.params().await? != self.keys.params() {
                return Err(DeviceError::ParamMismatch);
            }
            self.params_checked = true;
        }
        let enc = encrypt_features(
            self.keys.context(),
            &self.keys.pair().public,
            &features,
            &mut rand::rng(),
        )?;

        let mut sealer = Sealer::new(self.keys.blob_key().clone(), self.keys.nonce_counter);
        let counter = sealer.next_counter();
        let mut persisted = self.keys.clone();
        persisted.nonce_counter = Some(counter);
        persisted.save(&self.key_path)?;
        self.keys.nonce_counter = Some(counter);
        let sealed = sealer.seal(bytes, counter)?;

        let req = CreateRecordRequest {
            device_id: self.config.device_id.clone(),
            meta,
            blob: SealedBlobJson::from(&sealed),
            features: enc,
        };
        let id = self.server.put_record(&req).await?;
        tracing::info!(record_id = %id, bytes = bytes.len(), "ingested");
        Ok(id)
    }

    /// Ingests every `*.wav` in `dir` in name order, continuing past
    /// per-file failures.
    pub async fn batch_ingest(&mut self, dir: &Path) -> Result<Vec<BatchItem>, DeviceError> {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(io_err(dir))?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
            })
            .collect();
        files.sort();
        let mut out = Vec::with_capacity(files.len());
        for f in files {
            let file = f.display().to_string();
            out.push(match self.ingest(&f).await {
                Ok(id) => BatchItem {
                    file,
                    record_id: Some(id),
                    error: None,
                },
                Err(e) => BatchItem {
                    file,
                    record_id: None,
                    error: Some(e.to_string()),
                },
            });
        }
        Ok(out)
    }
}
