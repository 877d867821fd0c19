//! Somewhat-homomorphic public-key encryption over Z_q[x]/(x^n + 1).
//!
//! Keys are `s` and `(a, b)` with `a = -(b s + p e)`. A fresh encryption of
//! `m` is `(a u + p g + m, b u + p f)`; decryption evaluates the ciphertext
//! as a polynomial at `s`, centers mod q and reduces mod p. Addition is
//! componentwise after zero padding and multiplication convolves the
//! component lists, so degree grows with each product. There is no
//! relinearization.

pub mod codec;
pub mod modq;
pub mod params;
pub mod ring;
pub mod scheme;
pub mod wire;

use thiserror::Error;

pub use codec::{decode_fixed, encode_fixed, quantize};
pub use params::HeParams;
pub use scheme::{Ciphertext, HeContext, KeyPair, PlaintextPoly, PublicKey, SecretKey};
pub use wire::CiphertextJson;

#[derive(Debug, Error)]
pub enum HeError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("message coefficient {0} outside the centered plaintext range")]
    MessageOutOfRange(i128),
    #[error("parameter mismatch: {0}")]
    ParamMismatch(String),
    #[error("value {0} does not fit the plaintext space at this scale")]
    EncodingOverflow(f64),
    #[error("malformed ciphertext: {0}")]
    Malformed(String),
}
