//! Fixed-point mapping between real feature values and scalar plaintexts.

use super::params::HeParams;
use super::scheme::PlaintextPoly;
use super::HeError;

/// `round(x * scale)` as a degree-0 plaintext.
pub fn encode_fixed(x: f64, params: &HeParams) -> Result<PlaintextPoly, HeError> {
    let v = quantize(x, params.scale)?;
    if v.unsigned_abs() as u128 * 2 >= params.p as u128 {
        return Err(HeError::EncodingOverflow(x));
    }
    PlaintextPoly::scalar(v as i64, params)
}

/// Constant coefficient divided by `scale`.
pub fn decode_fixed(m: &PlaintextPoly, scale: u64) -> f64 {
    m.constant() as f64 / scale as f64
}

/// Same rounding used by [`encode_fixed`], exposed for plaintext oracles.
pub fn quantize(x: f64, scale: u64) -> Result<i64, HeError> {
    let v = (x * scale as f64).round();
    if !v.is_finite() || v.abs() >= i64::MAX as f64 {
        return Err(HeError::EncodingOverflow(x));
    }
    Ok(v as i64)
}
