use serde::{Deserialize, Serialize};

use super::modq::{is_prime, next_prime_congruent_one, MAX_MODULUS_BITS};
use super::HeError;

/// Plaintext modulus floor: the default `p` is the smallest prime above this.
pub const DEFAULT_P_FLOOR: u128 = 1 << 30;
/// Ciphertext modulus floor: the default `q` is the smallest prime above
/// this that is congruent to 1 modulo 2n.
pub const DEFAULT_Q_FLOOR: u128 = 1 << 100;
pub const DEFAULT_DEGREE: usize = 1024;
pub const DEFAULT_SIGMA: f64 = 3.2;
pub const DEFAULT_SCALE: u64 = 16;

/// Public system parameters.
///
/// Serialized with both moduli as decimal strings, since `q` does not fit
/// a JSON number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeParams {
    #[serde(with = "dec_u64")]
    pub p: u64,
    #[serde(with = "dec_u128")]
    pub q: u128,
    pub n: usize,
    pub sigma: f64,
    /// Fixed-point scale applied to real features before encryption.
    #[serde(rename = "S")]
    pub scale: u64,
}

impl HeParams {
    /// Default moduli, noise and scale for ring degree `n`.
    pub fn recommended(n: usize) -> Result<Self, HeError> {
        if n < 2 || !n.is_power_of_two() {
            return Err(HeError::InvalidParams(format!("n = {n} is not a power of two >= 2")));
        }
        let p = next_prime_congruent_one(DEFAULT_P_FLOOR, 1).expect("prime above 2^30") as u64;
        let q = next_prime_congruent_one(DEFAULT_Q_FLOOR, 2 * n as u128)
            .ok_or_else(|| HeError::InvalidParams(format!("no NTT prime for n = {n}")))?;
        Ok(Self {
            p,
            q,
            n,
            sigma: DEFAULT_SIGMA,
            scale: DEFAULT_SCALE,
        })
    }

    pub fn validate(&self) -> Result<(), HeError> {
        let fail = |msg: String| Err(HeError::InvalidParams(msg));
        if self.n < 2 || !self.n.is_power_of_two() {
            return fail(format!("n = {} is not a power of two >= 2", self.n));
        }
        if !is_prime(self.p as u128) {
            return fail(format!("p = {} is not prime", self.p));
        }
        if 128 - self.q.leading_zeros() > MAX_MODULUS_BITS {
            return fail(format!("q exceeds {MAX_MODULUS_BITS} bits"));
        }
        if !is_prime(self.q) {
            return fail(format!("q = {} is not prime", self.q));
        }
        if self.q % 4 != 1 {
            return fail("q must be 1 mod 4".into());
        }
        if (self.p as u128) > self.q {
            return fail("p must not exceed q".into());
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return fail(format!("sigma = {} must be positive", self.sigma));
        }
        if self.scale == 0 {
            return fail("scale must be >= 1".into());
        }
        Ok(())
    }

    /// Largest `|round(x * S)|` such that a 36-term squared distance between
    /// two encoded vectors stays inside the centered plaintext range.
    pub fn max_encoded_magnitude(&self, dims: usize) -> i64 {
        let half_p = (self.p / 2) as f64;
        // dims * (2 * m)^2 <= p/2
        ((half_p / dims as f64).sqrt() / 2.0).floor() as i64
    }
}

impl Default for HeParams {
    fn default() -> Self {
        Self::recommended(DEFAULT_DEGREE).expect("default degree is valid")
    }
}

pub(crate) mod dec_u128 {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(D::Error::custom)
    }
}

pub(crate) mod dec_u64 {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(D::Error::custom)
    }
}
