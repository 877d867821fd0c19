//! JSON forms: every polynomial is a list of decimal-string coefficients
//! in `[0, q)`.

use serde::{Deserialize, Serialize};

use super::scheme::{Ciphertext, PublicKey, SecretKey};
use super::HeError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiphertextJson {
    pub deg: usize,
    pub polys: Vec<Vec<String>>,
}

fn poly_to_strings(p: &[u128]) -> Vec<String> {
    p.iter().map(u128::to_string).collect()
}

fn poly_from_strings(p: &[String]) -> Result<Vec<u128>, HeError> {
    p.iter()
        .map(|s| {
            s.parse::<u128>()
                .map_err(|e| HeError::Malformed(format!("coefficient {s:?}: {e}")))
        })
        .collect()
}

impl From<&Ciphertext> for CiphertextJson {
    fn from(ct: &Ciphertext) -> Self {
        Self {
            deg: ct.degree(),
            polys: ct.polys().iter().map(|p| poly_to_strings(p)).collect(),
        }
    }
}

impl From<Ciphertext> for CiphertextJson {
    fn from(ct: Ciphertext) -> Self {
        Self::from(&ct)
    }
}

impl TryFrom<CiphertextJson> for Ciphertext {
    type Error = HeError;

    fn try_from(j: CiphertextJson) -> Result<Self, HeError> {
        if j.polys.len() != j.deg + 1 {
            return Err(HeError::Malformed(format!(
                "deg {} but {} polynomials",
                j.deg,
                j.polys.len()
            )));
        }
        let polys = j
            .polys
            .iter()
            .map(|p| poly_from_strings(p))
            .collect::<Result<Vec<_>, _>>()?;
        if polys.iter().any(|p| p.len() != polys[0].len()) {
            return Err(HeError::Malformed("polynomials of unequal length".into()));
        }
        Ciphertext::from_polys(polys)
    }
}

impl Serialize for Ciphertext {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        CiphertextJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Ciphertext {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = CiphertextJson::deserialize(d)?;
        Ciphertext::try_from(j).map_err(serde::de::Error::custom)
    }
}

impl Serialize for SecretKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        poly_to_strings(self.poly()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for SecretKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        poly_from_strings(&raw)
            .map(SecretKey::from_poly)
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct PublicKeyJson {
    a: Vec<String>,
    b: Vec<String>,
}

impl Serialize for PublicKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PublicKeyJson {
            a: poly_to_strings(self.a()),
            b: poly_to_strings(self.b()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = PublicKeyJson::deserialize(d)?;
        let a = poly_from_strings(&j.a).map_err(serde::de::Error::custom)?;
        let b = poly_from_strings(&j.b).map_err(serde::de::Error::custom)?;
        Ok(PublicKey::from_polys(a, b))
    }
}
