//! Arithmetic modulo an odd modulus below 2^126.
//!
//! Products are formed as 256-bit values and reduced with Montgomery's
//! method (R = 2^128). Values are kept in ordinary form at the API
//! boundary; the Montgomery form only appears inside [`Modulus::mont_mul`]
//! callers that pre-scale one operand (NTT twiddles).

const LOW64: u128 = u64::MAX as u128;

/// Largest supported modulus bit width. Leaves room for `a + b` and the
/// REDC intermediate `t < 2q` without overflowing `u128`.
pub const MAX_MODULUS_BITS: u32 = 126;

/// Full 128x128 -> 256-bit product, returned as `(hi, lo)`.
#[inline]
pub(crate) fn mul_wide(a: u128, b: u128) -> (u128, u128) {
    let (a1, a0) = (a >> 64, a & LOW64);
    let (b1, b0) = (b >> 64, b & LOW64);
    let p00 = a0 * b0;
    let p01 = a0 * b1;
    let p10 = a1 * b0;
    let p11 = a1 * b1;
    let mid = (p00 >> 64) + (p01 & LOW64) + (p10 & LOW64);
    let lo = (p00 & LOW64) | (mid << 64);
    let hi = p11 + (p01 >> 64) + (p10 >> 64) + (mid >> 64);
    (hi, lo)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Modulus {
    q: u128,
    /// -q^{-1} mod 2^128
    neg_inv: u128,
    /// 2^256 mod q
    r2: u128,
}

impl Modulus {
    /// Returns `None` for even moduli, moduli below 3, or moduli wider
    /// than [`MAX_MODULUS_BITS`].
    pub fn new(q: u128) -> Option<Self> {
        if q < 3 || q % 2 == 0 || 128 - q.leading_zeros() > MAX_MODULUS_BITS {
            return None;
        }
        // Newton iteration doubles the number of correct low bits each step.
        let mut inv = q;
        for _ in 0..7 {
            inv = inv.wrapping_mul(2u128.wrapping_sub(q.wrapping_mul(inv)));
        }
        debug_assert_eq!(q.wrapping_mul(inv), 1);

        let r1 = (u128::MAX % q + 1) % q;
        let mut r2 = r1;
        for _ in 0..128 {
            r2 = add_mod(r2, r2, q);
        }
        Some(Self {
            q,
            neg_inv: inv.wrapping_neg(),
            r2,
        })
    }

    #[inline]
    pub fn value(&self) -> u128 {
        self.q
    }

    #[inline]
    fn redc(&self, hi: u128, lo: u128) -> u128 {
        let m = lo.wrapping_mul(self.neg_inv);
        let (mh, ml) = mul_wide(m, self.q);
        let (_, carry) = lo.overflowing_add(ml);
        let t = hi + mh + carry as u128;
        if t >= self.q {
            t - self.q
        } else {
            t
        }
    }

    /// `a * b * 2^-128 mod q`. Both inputs must be reduced.
    #[inline]
    pub fn mont_mul(&self, a: u128, b: u128) -> u128 {
        let (hi, lo) = mul_wide(a, b);
        self.redc(hi, lo)
    }

    /// Montgomery representation `a * 2^128 mod q`.
    #[inline]
    pub fn to_mont(&self, a: u128) -> u128 {
        self.mont_mul(a, self.r2)
    }

    #[inline]
    pub fn mul(&self, a: u128, b: u128) -> u128 {
        self.mont_mul(self.mont_mul(a, b), self.r2)
    }

    #[inline]
    pub fn add(&self, a: u128, b: u128) -> u128 {
        add_mod(a, b, self.q)
    }

    #[inline]
    pub fn sub(&self, a: u128, b: u128) -> u128 {
        if a >= b {
            a - b
        } else {
            a + (self.q - b)
        }
    }

    #[inline]
    pub fn neg(&self, a: u128) -> u128 {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    pub fn pow(&self, base: u128, mut exp: u128) -> u128 {
        let mut acc = self.to_mont(1);
        let mut b = self.to_mont(base % self.q);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mont_mul(acc, b);
            }
            b = self.mont_mul(b, b);
            exp >>= 1;
        }
        self.mont_mul(acc, 1)
    }

    /// Inverse by Fermat; only meaningful for prime moduli.
    pub fn inv(&self, a: u128) -> u128 {
        self.pow(a, self.q - 2)
    }

    #[inline]
    pub fn reduce_i128(&self, x: i128) -> u128 {
        x.rem_euclid(self.q as i128) as u128
    }

    #[inline]
    pub fn reduce_i64(&self, x: i64) -> u128 {
        self.reduce_i128(x as i128)
    }

    /// Representative in `(-q/2, q/2]`.
    #[inline]
    pub fn center(&self, a: u128) -> i128 {
        if a > self.q / 2 {
            a as i128 - self.q as i128
        } else {
            a as i128
        }
    }
}

#[inline]
fn add_mod(a: u128, b: u128, q: u128) -> u128 {
    let s = a + b;
    if s >= q {
        s - q
    } else {
        s
    }
}

const SMALL_PRIMES: [u128; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

/// Miller-Rabin over the first 24 prime bases. Deterministic below 2^81;
/// above that the error probability is at most 4^-24.
pub fn is_prime(n: u128) -> bool {
    if n < 2 {
        return false;
    }
    for &p in &SMALL_PRIMES {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let Some(m) = Modulus::new(n) else {
        // Wider than the Montgomery routine supports.
        return false;
    };
    let mut d = n - 1;
    let mut r = 0;
    while d % 2 == 0 {
        d /= 2;
        r += 1;
    }
    'bases: for &a in &SMALL_PRIMES {
        let mut x = m.pow(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..r {
            x = m.mul(x, x);
            if x == n - 1 {
                continue 'bases;
            }
        }
        return false;
    }
    true
}

/// Smallest prime strictly greater than `lower` that is congruent to 1
/// modulo `step` (`step` = 1 or 2 means any odd prime).
pub fn next_prime_congruent_one(lower: u128, step: u128) -> Option<u128> {
    let step = step.max(2);
    let mut c = lower - lower % step + 1;
    if c <= lower {
        c = c.checked_add(step)?;
    }
    loop {
        if is_prime(c) {
            return Some(c);
        }
        c = c.checked_add(step)?;
        if 128 - c.leading_zeros() > MAX_MODULUS_BITS {
            return None;
        }
    }
}
