//! AES-256-GCM sealing of raw voice files.
//!
//! Nonces are a 64-bit per-device counter, big-endian, left-padded with
//! four zero bytes. [`Sealer`] refuses any counter that is not strictly
//! greater than the last one it used.

use aes_gcm::aead::{Aead, KeyInit};
use aes_gcm::{Aes256Gcm, Nonce as GcmNonce};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const TAG_LEN: usize = 16;
pub const NONCE_LEN: usize = 12;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BlobError {
    #[error("nonce counter {attempted} already used (last issued {last})")]
    NonceReuse { attempted: u64, last: u64 },
    #[error("authentication failed")]
    AuthFailure,
    #[error("malformed sealed blob: {0}")]
    Malformed(String),
}

#[derive(Clone, PartialEq, Eq)]
pub struct BlobKey([u8; 32]);

impl BlobKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn generate<R: rand::CryptoRng + rand::Rng + ?Sized>(rng: &mut R) -> Self {
        let mut k = [0u8; 32];
        rng.fill_bytes(&mut k);
        Self(k)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// Short public identifier: first 8 hex digits of SHA-256 of the key.
    pub fn key_id(&self) -> String {
        let digest = Sha256::digest(self.0);
        digest[..4].iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl std::fmt::Debug for BlobKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BlobKey({})", self.key_id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Nonce([u8; NONCE_LEN]);

impl Nonce {
    pub fn from_counter(counter: u64) -> Self {
        let mut n = [0u8; NONCE_LEN];
        n[4..].copy_from_slice(&counter.to_be_bytes());
        Self(n)
    }

    pub fn from_bytes(bytes: [u8; NONCE_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; NONCE_LEN] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedBlob {
    pub nonce: Nonce,
    /// Ciphertext followed by the 16-byte tag.
    pub ciphertext: Vec<u8>,
    pub key_id: String,
}

/// Wire form with base64 fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealedBlobJson {
    pub nonce_b64: String,
    pub ct_b64: String,
    #[serde(default)]
    pub key_id: String,
}

impl From<&SealedBlob> for SealedBlobJson {
    fn from(b: &SealedBlob) -> Self {
        Self {
            nonce_b64: B64.encode(b.nonce.0),
            ct_b64: B64.encode(&b.ciphertext),
            key_id: b.key_id.clone(),
        }
    }
}

impl TryFrom<&SealedBlobJson> for SealedBlob {
    type Error = BlobError;

    fn try_from(j: &SealedBlobJson) -> Result<Self, BlobError> {
        let nonce = B64
            .decode(&j.nonce_b64)
            .map_err(|e| BlobError::Malformed(format!("nonce: {e}")))?;
        let nonce: [u8; NONCE_LEN] = nonce
            .try_into()
            .map_err(|_| BlobError::Malformed("nonce must be 12 bytes".into()))?;
        let ciphertext = B64
            .decode(&j.ct_b64)
            .map_err(|e| BlobError::Malformed(format!("ciphertext: {e}")))?;
        if ciphertext.len() < TAG_LEN {
            return Err(BlobError::Malformed("ciphertext shorter than tag".into()));
        }
        Ok(Self {
            nonce: Nonce(nonce),
            ciphertext,
            key_id: j.key_id.clone(),
        })
    }
}

impl SealedBlob {
    /// `nonce || ciphertext || tag`, the on-disk server form.
    pub fn to_bytes(&self) -> Vec<u8> {
        [&self.nonce.0[..], &self.ciphertext].concat()
    }

    pub fn from_bytes(bytes: &[u8], key_id: String) -> Result<Self, BlobError> {
        if bytes.len() < NONCE_LEN + TAG_LEN {
            return Err(BlobError::Malformed("blob too short".into()));
        }
        let mut nonce = [0u8; NONCE_LEN];
        nonce.copy_from_slice(&bytes[..NONCE_LEN]);
        Ok(Self {
            nonce: Nonce(nonce),
            ciphertext: bytes[NONCE_LEN..].to_vec(),
            key_id,
        })
    }
}

fn cipher(key: &BlobKey) -> Aes256Gcm {
    Aes256Gcm::new_from_slice(&key.0).expect("32-byte key")
}

/// Stateless sealing; the caller guarantees nonce uniqueness.
pub fn seal(key: &BlobKey, plaintext: &[u8], nonce: &Nonce) -> SealedBlob {
    let ciphertext = cipher(key)
        .encrypt(GcmNonce::from_slice(&nonce.0), plaintext)
        .expect("AES-GCM encryption of in-memory buffer");
    SealedBlob {
        nonce: *nonce,
        ciphertext,
        key_id: key.key_id(),
    }
}

pub fn open(key: &BlobKey, blob: &SealedBlob) -> Result<Vec<u8>, BlobError> {
    cipher(key)
        .decrypt(GcmNonce::from_slice(&blob.nonce.0), blob.ciphertext.as_slice())
        .map_err(|_| BlobError::AuthFailure)
}

/// Sealing with a monotonic nonce counter.
#[derive(Debug)]
pub struct Sealer {
    key: BlobKey,
    last: Option<u64>,
}

impl Sealer {
    /// `last_used` is the highest counter already consumed under `key`.
    pub fn new(key: BlobKey, last_used: Option<u64>) -> Self {
        Self {
            key,
            last: last_used,
        }
    }

    pub fn last_used(&self) -> Option<u64> {
        self.last
    }

    pub fn next_counter(&self) -> u64 {
        self.last.map_or(0, |l| l + 1)
    }

    pub fn seal(&mut self, plaintext: &[u8], counter: u64) -> Result<SealedBlob, BlobError> {
        if let Some(last) = self.last {
            if counter <= last {
                return Err(BlobError::NonceReuse {
                    attempted: counter,
                    last,
                });
            }
        }
        self.last = Some(counter);
        Ok(seal(&self.key, plaintext, &Nonce::from_counter(counter)))
    }
}
