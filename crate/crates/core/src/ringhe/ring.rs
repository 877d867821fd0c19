//! Negacyclic polynomial arithmetic in Z_q[x]/(x^n + 1).
//!
//! When 2n divides q - 1 the ring has a primitive 2n-th root of unity and
//! products go through a merged negacyclic NTT. Otherwise products fall back
//! to schoolbook convolution. Both transforms are linear, so sums may be
//! taken in either domain.

use super::modq::Modulus;

#[derive(Debug, Clone)]
struct NttTables {
    /// psi^{bitrev(i)} in Montgomery form
    psi_rev: Vec<u128>,
    /// psi^{-bitrev(i)} in Montgomery form
    psi_inv_rev: Vec<u128>,
    /// n^{-1} in Montgomery form
    n_inv: u128,
}

impl NttTables {
    fn new(m: &Modulus, n: usize) -> Option<Self> {
        let q = m.value();
        let two_n = 2 * n as u128;
        if (q - 1) % two_n != 0 {
            return None;
        }
        let cofactor = (q - 1) / two_n;
        // psi has order exactly 2n iff psi^n = -1 (2n is a power of two).
        let psi = (2..)
            .take(10_000)
            .map(|g| m.pow(g, cofactor))
            .find(|&psi| m.pow(psi, n as u128) == q - 1)?;
        let psi_inv = m.inv(psi);
        let bits = n.trailing_zeros();
        let mut psi_rev = vec![0; n];
        let mut psi_inv_rev = vec![0; n];
        let (mut pw, mut pw_inv) = (1u128, 1u128);
        for i in 0..n {
            let r = bit_reverse(i, bits);
            psi_rev[r] = m.to_mont(pw);
            psi_inv_rev[r] = m.to_mont(pw_inv);
            pw = m.mul(pw, psi);
            pw_inv = m.mul(pw_inv, psi_inv);
        }
        let n_inv = m.to_mont(m.inv(n as u128 % q));
        Some(Self {
            psi_rev,
            psi_inv_rev,
            n_inv,
        })
    }
}

fn bit_reverse(i: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        i.reverse_bits() >> (usize::BITS - bits)
    }
}

/// Shared arithmetic context for one `(n, q)` pair.
#[derive(Debug, Clone)]
pub struct Ring {
    n: usize,
    modulus: Modulus,
    ntt: Option<NttTables>,
}

impl Ring {
    /// `n` must be a power of two and `q` an odd prime accepted by
    /// [`Modulus::new`]; callers validate this through `HeParams`.
    pub fn new(n: usize, q: u128) -> Option<Self> {
        if n < 2 || !n.is_power_of_two() {
            return None;
        }
        let modulus = Modulus::new(q)?;
        let ntt = NttTables::new(&modulus, n);
        Some(Self { n, modulus, ntt })
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }

    pub fn has_ntt(&self) -> bool {
        self.ntt.is_some()
    }

    pub fn zero(&self) -> Vec<u128> {
        vec![0; self.n]
    }

    pub fn add(&self, a: &[u128], b: &[u128]) -> Vec<u128> {
        a.iter().zip(b).map(|(&x, &y)| self.modulus.add(x, y)).collect()
    }

    pub fn sub(&self, a: &[u128], b: &[u128]) -> Vec<u128> {
        a.iter().zip(b).map(|(&x, &y)| self.modulus.sub(x, y)).collect()
    }

    pub fn neg(&self, a: &[u128]) -> Vec<u128> {
        a.iter().map(|&x| self.modulus.neg(x)).collect()
    }

    pub fn scalar_mul(&self, a: &[u128], k: u128) -> Vec<u128> {
        let k = k % self.modulus.value();
        a.iter().map(|&x| self.modulus.mul(x, k)).collect()
    }

    pub fn from_signed(&self, a: &[i64]) -> Vec<u128> {
        a.iter().map(|&x| self.modulus.reduce_i64(x)).collect()
    }

    /// Negacyclic product.
    pub fn mul(&self, a: &[u128], b: &[u128]) -> Vec<u128> {
        if self.ntt.is_some() {
            let fa = self.forward(a);
            let fb = self.forward(b);
            self.inverse(self.mul_transformed(&fa, &fb))
        } else {
            self.schoolbook_mul(a, b)
        }
    }

    /// Direct O(n^2) negacyclic convolution.
    pub fn schoolbook_mul(&self, a: &[u128], b: &[u128]) -> Vec<u128> {
        let m = &self.modulus;
        let n = self.n;
        let mut out = vec![0u128; n];
        for (i, &x) in a.iter().enumerate() {
            if x == 0 {
                continue;
            }
            for (j, &y) in b.iter().enumerate() {
                let prod = m.mul(x, y);
                let k = i + j;
                if k < n {
                    out[k] = m.add(out[k], prod);
                } else {
                    out[k - n] = m.sub(out[k - n], prod);
                }
            }
        }
        out
    }

    /// Maps coefficients to the evaluation domain (identity without NTT).
    pub fn forward(&self, a: &[u128]) -> Vec<u128> {
        let mut v = a.to_vec();
        if let Some(t) = &self.ntt {
            self.ntt_forward(t, &mut v);
        }
        v
    }

    pub fn inverse(&self, mut a: Vec<u128>) -> Vec<u128> {
        if let Some(t) = &self.ntt {
            self.ntt_inverse(t, &mut a);
        }
        a
    }

    /// Product of two transformed polynomials, still transformed.
    pub fn mul_transformed(&self, a: &[u128], b: &[u128]) -> Vec<u128> {
        if self.ntt.is_some() {
            a.iter()
                .zip(b)
                .map(|(&x, &y)| self.modulus.mul(x, y))
                .collect()
        } else {
            self.schoolbook_mul(a, b)
        }
    }

    fn ntt_forward(&self, t: &NttTables, a: &mut [u128]) {
        let m = &self.modulus;
        let n = self.n;
        let mut half = n;
        let mut groups = 1;
        while groups < n {
            half /= 2;
            for i in 0..groups {
                let w = t.psi_rev[groups + i];
                let start = 2 * i * half;
                for j in start..start + half {
                    let u = a[j];
                    let v = m.mont_mul(a[j + half], w);
                    a[j] = m.add(u, v);
                    a[j + half] = m.sub(u, v);
                }
            }
            groups *= 2;
        }
    }

    fn ntt_inverse(&self, t: &NttTables, a: &mut [u128]) {
        let m = &self.modulus;
        let n = self.n;
        let mut half = 1;
        let mut groups = n;
        while groups > 1 {
            let h = groups / 2;
            for i in 0..h {
                let w = t.psi_inv_rev[h + i];
                let start = 2 * i * half;
                for j in start..start + half {
                    let u = a[j];
                    let v = a[j + half];
                    a[j] = m.add(u, v);
                    a[j + half] = m.mont_mul(m.sub(u, v), w);
                }
            }
            half *= 2;
            groups = h;
        }
        for x in a.iter_mut() {
            *x = m.mont_mul(*x, t.n_inv);
        }
    }
}
