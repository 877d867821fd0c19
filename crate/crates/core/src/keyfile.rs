//! Out-of-band key file shared by a device and its caregiver: HE
//! parameters and keypair, the blob key and the device's last used nonce
//! counter.

use std::fs;
use std::io;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::{CryptoRng, Rng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blobcrypt::BlobKey;
use crate::fsutil::write_atomic;
use crate::ringhe::{HeContext, HeError, HeParams, KeyPair, PublicKey, SecretKey};

pub const KEY_FILE_MODE: u32 = 0o600;

#[derive(Debug, Error)]
pub enum KeyFileError {
    #[error("key file I/O: {0}")]
    Io(#[from] io::Error),
    #[error("key file is not valid: {0}")]
    Format(String),
    #[error("key file {0} is readable by group or others")]
    Permissions(String),
    #[error(transparent)]
    Crypto(#[from] HeError),
}

#[derive(Serialize, Deserialize)]
struct KeyFileJson {
    params: HeParams,
    sk: SecretKey,
    pk: PublicKey,
    blob_key_b64: String,
    #[serde(default)]
    nonce_counter: Option<u64>,
}

/// Loaded key material.
#[derive(Clone)]
pub struct Keys {
    ctx: HeContext,
    pair: KeyPair,
    blob_key: BlobKey,
    /// Highest nonce counter already consumed.
    pub nonce_counter: Option<u64>,
}

impl std::fmt::Debug for Keys {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Keys")
            .field("params", self.ctx.params())
            .field("blob_key", &self.blob_key)
            .field("nonce_counter", &self.nonce_counter)
            .finish_non_exhaustive()
    }
}

impl Keys {
    pub fn generate<R: Rng + CryptoRng + ?Sized>(
        params: HeParams,
        rng: &mut R,
    ) -> Result<Self, KeyFileError> {
        let ctx = HeContext::new(params)?;
        let pair = ctx.keygen(rng);
        Ok(Self {
            ctx,
            pair,
            blob_key: BlobKey::generate(rng),
            nonce_counter: None,
        })
    }

    pub fn context(&self) -> &HeContext {
        &self.ctx
    }

    pub fn params(&self) -> &HeParams {
        self.ctx.params()
    }

    pub fn pair(&self) -> &KeyPair {
        &self.pair
    }

    pub fn blob_key(&self) -> &BlobKey {
        &self.blob_key
    }

    pub fn to_json(&self) -> String {
        let j = KeyFileJson {
            params: self.ctx.params().clone(),
            sk: self.pair.secret.clone(),
            pk: self.pair.public.clone(),
            blob_key_b64: B64.encode(self.blob_key.as_bytes()),
            nonce_counter: self.nonce_counter,
        };
        serde_json::to_string_pretty(&j).expect("key file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, KeyFileError> {
        let j: KeyFileJson =
            serde_json::from_str(text).map_err(|e| KeyFileError::Format(e.to_string()))?;
        let ctx = HeContext::new(j.params)?;
        let pair = KeyPair {
            secret: j.sk,
            public: j.pk,
        };
        ctx.check_keys(&pair)?;
        let raw = B64
            .decode(&j.blob_key_b64)
            .map_err(|e| KeyFileError::Format(format!("blob key: {e}")))?;
        let bytes: [u8; 32] = raw
            .try_into()
            .map_err(|_| KeyFileError::Format("blob key must be 32 bytes".into()))?;
        Ok(Self {
            ctx,
            pair,
            blob_key: BlobKey::from_bytes(bytes),
            nonce_counter: j.nonce_counter,
        })
    }

    /// Refuses files readable by group or others.
    pub fn load(path: &Path) -> Result<Self, KeyFileError> {
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            if fs::metadata(path)?.permissions().mode() & 0o077 != 0 {
                return Err(KeyFileError::Permissions(path.display().to_string()));
            }
        }
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Atomic replace with mode 0600.
    pub fn save(&self, path: &Path) -> Result<(), KeyFileError> {
        write_atomic(path, self.to_json().as_bytes(), Some(KEY_FILE_MODE))?;
        Ok(())
    }
}
