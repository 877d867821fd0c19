//! Device- and caregiver-side glue between audio, features and ciphertexts.

use rand::{CryptoRng, Rng};
use thiserror::Error;

use crate::audio::{read_wav, AudioError};
use crate::matching::descale;
use crate::mfcc::{column_mean, extract_features, FeatureVector, MfccConfig, MfccError, FEATURE_DIM};
use crate::ringhe::{encode_fixed, quantize, Ciphertext, HeContext, HeError, PublicKey, SecretKey};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Mfcc(#[from] MfccError),
    #[error(transparent)]
    Crypto(#[from] HeError),
    #[error("feature {index} encodes to {value}, outside the envelope +-{limit}")]
    Envelope { index: usize, value: i64, limit: i64 },
    #[error("expected {FEATURE_DIM} features, got {0}")]
    Dimension(usize),
}

/// WAV bytes to the 36-dim column mean.
pub fn features_from_wav(bytes: &[u8], config: &MfccConfig) -> Result<FeatureVector, ProtocolError> {
    let clip = read_wav(bytes)?;
    Ok(column_mean(&extract_features(&clip, config)?))
}

/// Rejects vectors whose squared distance could wrap modulo `p`.
pub fn check_envelope(ctx: &HeContext, v: &FeatureVector) -> Result<(), ProtocolError> {
    if v.len() != FEATURE_DIM {
        return Err(ProtocolError::Dimension(v.len()));
    }
    let limit = ctx.params().max_encoded_magnitude(FEATURE_DIM);
    for (index, &x) in v.as_slice().iter().enumerate() {
        let value = quantize(x, ctx.params().scale)?;
        if value.abs() > limit {
            return Err(ProtocolError::Envelope { index, value, limit });
        }
    }
    Ok(())
}

pub fn encrypt_features<R: Rng + CryptoRng + ?Sized>(
    ctx: &HeContext,
    pk: &PublicKey,
    v: &FeatureVector,
    rng: &mut R,
) -> Result<Vec<Ciphertext>, ProtocolError> {
    check_envelope(ctx, v)?;
    v.as_slice()
        .iter()
        .map(|&x| Ok(ctx.encrypt(pk, &encode_fixed(x, ctx.params())?, rng)?))
        .collect()
}

/// Decrypted distance in feature units (divided by `S^2`).
pub fn decrypt_distance(ctx: &HeContext, sk: &SecretKey, ct: &Ciphertext) -> Result<f64, ProtocolError> {
    let raw = ctx.decrypt(sk, ct)?.constant();
    Ok(descale(raw, ctx.params().scale))
}
