use std::sync::{Arc, OnceLock};

use rand::{CryptoRng, Rng};
use rand_distr::{Distribution, Normal};

use super::params::HeParams;
use super::ring::Ring;
use super::HeError;

/// Samples beyond this many standard deviations are redrawn.
pub const GAUSSIAN_TAIL_CUT: f64 = 6.0;

/// Plaintext in R_p with coefficients in the centered range `(-p/2, p/2]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlaintextPoly {
    coeffs: Vec<i64>,
}

impl PlaintextPoly {
    pub fn new(coeffs: Vec<i64>, params: &HeParams) -> Result<Self, HeError> {
        if coeffs.len() != params.n {
            return Err(HeError::ParamMismatch(format!(
                "plaintext has {} coefficients, ring degree is {}",
                coeffs.len(),
                params.n
            )));
        }
        let half = (params.p / 2) as i64;
        let lo = -(((params.p - 1) / 2) as i64);
        if let Some(&bad) = coeffs.iter().find(|&&c| c < lo || c > half) {
            return Err(HeError::MessageOutOfRange(bad as i128));
        }
        Ok(Self { coeffs })
    }

    /// Degree-0 embedding of a scalar.
    pub fn scalar(value: i64, params: &HeParams) -> Result<Self, HeError> {
        let mut coeffs = vec![0; params.n];
        coeffs[0] = value;
        Self::new(coeffs, params)
    }

    pub fn coeffs(&self) -> &[i64] {
        &self.coeffs
    }

    pub fn constant(&self) -> i64 {
        self.coeffs[0]
    }
}

/// Ciphertext `(c_0, ..., c_d)`; decrypts as `sum c_k s^k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    polys: Vec<Vec<u128>>,
}

impl Ciphertext {
    /// Builds a ciphertext from raw components. Shape is checked against a
    /// context when the ciphertext is used.
    pub fn from_polys(polys: Vec<Vec<u128>>) -> Result<Self, HeError> {
        if polys.is_empty() {
            return Err(HeError::Malformed("ciphertext has no components".into()));
        }
        Ok(Self { polys })
    }

    pub fn degree(&self) -> usize {
        self.polys.len() - 1
    }

    pub fn polys(&self) -> &[Vec<u128>] {
        &self.polys
    }
}

#[derive(Debug, Default)]
struct Transformed(OnceLock<Vec<Vec<u128>>>);

impl Clone for Transformed {
    fn clone(&self) -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone)]
pub struct SecretKey {
    s: Vec<u128>,
    cache: Transformed,
}

impl SecretKey {
    pub fn from_poly(s: Vec<u128>) -> Self {
        Self {
            s,
            cache: Transformed::default(),
        }
    }

    pub fn poly(&self) -> &[u128] {
        &self.s
    }

    fn transformed(&self, ring: &Ring) -> &[u128] {
        &self.cache.0.get_or_init(|| vec![ring.forward(&self.s)])[0]
    }
}

impl PartialEq for SecretKey {
    fn eq(&self, other: &Self) -> bool {
        self.s == other.s
    }
}

#[derive(Debug, Clone)]
pub struct PublicKey {
    a: Vec<u128>,
    b: Vec<u128>,
    cache: Transformed,
}

impl PublicKey {
    pub fn from_polys(a: Vec<u128>, b: Vec<u128>) -> Self {
        Self {
            a,
            b,
            cache: Transformed::default(),
        }
    }

    pub fn a(&self) -> &[u128] {
        &self.a
    }

    pub fn b(&self) -> &[u128] {
        &self.b
    }

    fn transformed(&self, ring: &Ring) -> &[Vec<u128>] {
        self.cache
            .0
            .get_or_init(|| vec![ring.forward(&self.a), ring.forward(&self.b)])
    }
}

impl PartialEq for PublicKey {
    fn eq(&self, other: &Self) -> bool {
        self.a == other.a && self.b == other.b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyPair {
    pub secret: SecretKey,
    pub public: PublicKey,
}

/// Parameters plus precomputed ring tables. Cheap to clone.
#[derive(Debug, Clone)]
pub struct HeContext {
    inner: Arc<Inner>,
}

#[derive(Debug)]
struct Inner {
    params: HeParams,
    ring: Ring,
    noise: Normal<f64>,
}

impl HeContext {
    pub fn new(params: HeParams) -> Result<Self, HeError> {
        params.validate()?;
        let ring = Ring::new(params.n, params.q)
            .ok_or_else(|| HeError::InvalidParams("unsupported ring".into()))?;
        let noise = Normal::new(0.0, params.sigma)
            .map_err(|e| HeError::InvalidParams(e.to_string()))?;
        Ok(Self {
            inner: Arc::new(Inner {
                params,
                ring,
                noise,
            }),
        })
    }

    pub fn params(&self) -> &HeParams {
        &self.inner.params
    }

    pub fn ring(&self) -> &Ring {
        &self.inner.ring
    }

    /// Discrete Gaussian by rounding, tail-cut at [`GAUSSIAN_TAIL_CUT`] sigma.
    pub fn sample_error<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<i64> {
        let bound = GAUSSIAN_TAIL_CUT * self.params().sigma;
        (0..self.params().n)
            .map(|_| loop {
                let x = self.inner.noise.sample(rng).round();
                if x.abs() <= bound {
                    break x as i64;
                }
            })
            .collect()
    }

    fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u128> {
        let q = self.params().q;
        (0..self.params().n).map(|_| rng.random_range(0..q)).collect()
    }

    pub fn keygen<R: Rng + CryptoRng + ?Sized>(&self, rng: &mut R) -> KeyPair {
        let ring = self.ring();
        let p = self.params().p as u128;
        let s = ring.from_signed(&self.sample_error(rng));
        let e = ring.from_signed(&self.sample_error(rng));
        let b = self.sample_uniform(rng);
        // a = -(b*s + p*e)
        let a = ring.neg(&ring.add(&ring.mul(&b, &s), &ring.scalar_mul(&e, p)));
        KeyPair {
            secret: SecretKey::from_poly(s),
            public: PublicKey::from_polys(a, b),
        }
    }

    pub fn encrypt<R: Rng + CryptoRng + ?Sized>(
        &self,
        pk: &PublicKey,
        m: &PlaintextPoly,
        rng: &mut R,
    ) -> Result<Ciphertext, HeError> {
        let params = self.params();
        if m.coeffs.len() != params.n {
            return Err(HeError::ParamMismatch("plaintext degree".into()));
        }
        self.check_poly(pk.a())?;
        self.check_poly(pk.b())?;
        let ring = self.ring();
        let p = params.p as u128;
        let u = ring.forward(&ring.from_signed(&self.sample_error(rng)));
        let f = ring.from_signed(&self.sample_error(rng));
        let g = ring.from_signed(&self.sample_error(rng));
        let hat = pk.transformed(ring);
        let au = ring.inverse(ring.mul_transformed(&hat[0], &u));
        let bu = ring.inverse(ring.mul_transformed(&hat[1], &u));
        let c0 = ring.add(&ring.add(&au, &ring.scalar_mul(&g, p)), &ring.from_signed(&m.coeffs));
        let c1 = ring.add(&bu, &ring.scalar_mul(&f, p));
        Ok(Ciphertext {
            polys: vec![c0, c1],
        })
    }

    pub fn encrypt_scalar<R: Rng + CryptoRng + ?Sized>(
        &self,
        pk: &PublicKey,
        value: i64,
        rng: &mut R,
    ) -> Result<Ciphertext, HeError> {
        let m = PlaintextPoly::scalar(value, self.params())?;
        self.encrypt(pk, &m, rng)
    }

    /// `sum_k c_k s^k` in R_q, coefficients in `[0, q)`.
    fn evaluate_at_secret(&self, sk: &SecretKey, ct: &Ciphertext) -> Result<Vec<u128>, HeError> {
        self.check(ct)?;
        self.check_poly(sk.poly())?;
        let ring = self.ring();
        let s_hat = sk.transformed(ring);
        let mut polys = ct.polys.iter().rev();
        let mut acc = ring.forward(polys.next().expect("non-empty"));
        for c in polys {
            acc = ring.add(&ring.mul_transformed(&acc, s_hat), &ring.forward(c));
        }
        Ok(ring.inverse(acc))
    }

    pub fn decrypt(&self, sk: &SecretKey, ct: &Ciphertext) -> Result<PlaintextPoly, HeError> {
        let v = self.evaluate_at_secret(sk, ct)?;
        let m = self.ring().modulus();
        let p = self.params().p as i128;
        let half = p / 2;
        let coeffs = v
            .into_iter()
            .map(|x| {
                let r = m.center(x).rem_euclid(p);
                (if r > half { r - p } else { r }) as i64
            })
            .collect();
        Ok(PlaintextPoly { coeffs })
    }

    /// Infinity norm of the centered decryption polynomial before the mod-p
    /// reduction. Decryption is correct while this stays below q/2.
    pub fn noise_norm(&self, sk: &SecretKey, ct: &Ciphertext) -> Result<u128, HeError> {
        let v = self.evaluate_at_secret(sk, ct)?;
        let m = self.ring().modulus();
        Ok(v.into_iter().map(|x| m.center(x).unsigned_abs()).max().unwrap_or(0))
    }

    pub fn add(&self, x: &Ciphertext, y: &Ciphertext) -> Result<Ciphertext, HeError> {
        self.combine(x, y, |r, a, b| r.add(a, b))
    }

    pub fn sub(&self, x: &Ciphertext, y: &Ciphertext) -> Result<Ciphertext, HeError> {
        self.combine(x, y, |r, a, b| r.sub(a, b))
    }

    fn combine(
        &self,
        x: &Ciphertext,
        y: &Ciphertext,
        op: impl Fn(&Ring, &[u128], &[u128]) -> Vec<u128>,
    ) -> Result<Ciphertext, HeError> {
        self.check(x)?;
        self.check(y)?;
        let ring = self.ring();
        let zero = ring.zero();
        let len = x.polys.len().max(y.polys.len());
        let polys = (0..len)
            .map(|k| {
                let a = x.polys.get(k).unwrap_or(&zero);
                let b = y.polys.get(k).unwrap_or(&zero);
                op(ring, a, b)
            })
            .collect();
        Ok(Ciphertext { polys })
    }

    /// Product as polynomials in a symbolic variable; degree is additive.
    pub fn mul(&self, x: &Ciphertext, y: &Ciphertext) -> Result<Ciphertext, HeError> {
        self.check(x)?;
        self.check(y)?;
        let ring = self.ring();
        let xs: Vec<_> = x.polys.iter().map(|c| ring.forward(c)).collect();
        let ys: Vec<_> = if std::ptr::eq(x, y) {
            xs.clone()
        } else {
            y.polys.iter().map(|c| ring.forward(c)).collect()
        };
        let mut out = vec![ring.zero(); xs.len() + ys.len() - 1];
        for (i, a) in xs.iter().enumerate() {
            for (j, b) in ys.iter().enumerate() {
                out[i + j] = ring.add(&out[i + j], &ring.mul_transformed(a, b));
            }
        }
        Ok(Ciphertext {
            polys: out.into_iter().map(|c| ring.inverse(c)).collect(),
        })
    }

    pub fn square(&self, x: &Ciphertext) -> Result<Ciphertext, HeError> {
        self.mul(x, x)
    }

    /// `sum_k (x_k - y_k)^2`, equal to folding [`Self::sub`], [`Self::square`]
    /// and [`Self::add`], with products accumulated in the transformed
    /// domain so each output component is inverted once.
    pub fn sum_of_squared_differences(
        &self,
        xs: &[Ciphertext],
        ys: &[Ciphertext],
    ) -> Result<Ciphertext, HeError> {
        if xs.len() != ys.len() || xs.is_empty() {
            return Err(HeError::ParamMismatch(format!(
                "operand counts {} and {} must be equal and non-zero",
                xs.len(),
                ys.len()
            )));
        }
        let ring = self.ring();
        let mut acc: Vec<Vec<u128>> = Vec::new();
        for (x, y) in xs.iter().zip(ys) {
            let d = self.sub(x, y)?;
            let t: Vec<_> = d.polys.iter().map(|c| ring.forward(c)).collect();
            if acc.len() < 2 * t.len() - 1 {
                acc.resize(2 * t.len() - 1, ring.zero());
            }
            for (i, a) in t.iter().enumerate() {
                for (j, b) in t.iter().enumerate() {
                    acc[i + j] = ring.add(&acc[i + j], &ring.mul_transformed(a, b));
                }
            }
        }
        Ok(Ciphertext {
            polys: acc.into_iter().map(|c| ring.inverse(c)).collect(),
        })
    }

    /// Verifies a ciphertext belongs to this context's ring.
    pub fn check(&self, ct: &Ciphertext) -> Result<(), HeError> {
        ct.polys.iter().try_for_each(|c| self.check_poly(c))
    }

    /// Verifies key polynomials belong to this context's ring.
    pub fn check_keys(&self, keys: &KeyPair) -> Result<(), HeError> {
        self.check_poly(keys.secret.poly())?;
        self.check_poly(keys.public.a())?;
        self.check_poly(keys.public.b())
    }

    fn check_poly(&self, c: &[u128]) -> Result<(), HeError> {
        let params = self.params();
        if c.len() != params.n {
            return Err(HeError::ParamMismatch(format!(
                "polynomial has {} coefficients, ring degree is {}",
                c.len(),
                params.n
            )));
        }
        if c.iter().any(|&x| x >= params.q) {
            return Err(HeError::ParamMismatch("coefficient not reduced mod q".into()));
        }
        Ok(())
    }
}
