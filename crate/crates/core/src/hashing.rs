//! Seeded limited-independence hash families.
//!
//! A [`KWiseHash`] is a random polynomial of degree `k - 1` over the Mersenne
//! field `F_P` with `P = 2^61 - 1`, reduced into the range by a final modulo.
//! The modulo leaves a non-uniformity of at most `range / P < 2^-32` for the
//! ranges used here. [`SignFamily`] is the `k = 4` instance mapped onto
//! `{-1, +1}`.
//!
//! Every family is a pure function of `(seed, parameters, input)`. Sub-seeds
//! are derived from a master seed with [`derive_seed`], a counter-based
//! SplitMix64 rule: `derive_seed(master, label, i) = mix(mix(master ^ mix(label)) + i)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SketchError};

/// The Mersenne prime `2^61 - 1`.
pub const FIELD_PRIME: u64 = (1u64 << 61) - 1;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives the `index`-th sub-seed of `master` for the component named by `label`.
pub fn derive_seed(master: u64, label: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(label)).wrapping_add(index))
}

/// Hashes a short ASCII tag into a seed label.
pub const fn label(tag: &str) -> u64 {
    let bytes = tag.as_bytes();
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut i = 0;
    while i < bytes.len() {
        h ^= bytes[i] as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
        i += 1;
    }
    h
}

#[inline]
fn reduce(x: u128) -> u64 {
    let lo = (x as u64) & FIELD_PRIME;
    let hi = (x >> 61) as u64;
    let mut r = lo + (hi & FIELD_PRIME) + ((x >> 122) as u64);
    while r >= FIELD_PRIME {
        r -= FIELD_PRIME;
    }
    r
}

#[inline]
pub(crate) fn field_mul(a: u64, b: u64) -> u64 {
    reduce(a as u128 * b as u128)
}

#[inline]
pub(crate) fn field_add(a: u64, b: u64) -> u64 {
    let s = a + b;
    if s >= FIELD_PRIME {
        s - FIELD_PRIME
    } else {
        s
    }
}

/// Degree-`(k-1)` polynomial hash `[domain_size] -> [range_size]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KWiseHash {
    seed: u64,
    k: usize,
    domain_size: u64,
    range_size: u64,
    coeffs: Vec<u64>,
}

impl KWiseHash {
    pub fn new(seed: u64, k: usize, domain_size: u64, range_size: u64) -> Result<Self> {
        if k < 2 {
            return Err(SketchError::invalid(format!(
                "independence degree must be at least 2, got {k}"
            )));
        }
        if domain_size == 0 || range_size == 0 {
            return Err(SketchError::invalid("domain and range must be nonempty"));
        }
        if domain_size > FIELD_PRIME || range_size > FIELD_PRIME {
            return Err(SketchError::invalid(
                "domain and range must not exceed the field prime 2^61 - 1",
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = (0..k).map(|_| rng.random_range(0..FIELD_PRIME)).collect();
        Ok(Self {
            seed,
            k,
            domain_size,
            range_size,
            coeffs,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn independence(&self) -> usize {
        self.k
    }

    pub fn domain_size(&self) -> u64 {
        self.domain_size
    }

    pub fn range_size(&self) -> u64 {
        self.range_size
    }

    pub fn field_prime(&self) -> u64 {
        FIELD_PRIME
    }

    /// Raw polynomial value in `[0, P)`, no domain check.
    #[inline]
    pub fn field_value(&self, x: u64) -> u64 {
        let x = x % FIELD_PRIME;
        let mut acc = 0u64;
        for &c in self.coeffs.iter().rev() {
            acc = field_add(field_mul(acc, x), c);
        }
        acc
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: u64) -> u64 {
        self.field_value(x) % self.range_size
    }

    pub fn eval(&self, x: u64) -> Result<u64> {
        if x >= self.domain_size {
            return Err(SketchError::IndexOutOfRange {
                index: x,
                n: self.domain_size,
            });
        }
        Ok(self.eval_unchecked(x))
    }

    /// Value mapped to the open-closed unit interval `(0, 1]`.
    #[inline]
    pub fn unit(&self, x: u64) -> f64 {
        (self.field_value(x) as f64 + 1.0) / FIELD_PRIME as f64
    }

    /// Seed bits needed to store the function: `k` field elements.
    pub fn seed_bits(&self) -> u64 {
        self.k as u64 * 61
    }
}

/// 4-wise independent random signs over `[domain_size]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignFamily {
    inner: KWiseHash,
}

impl SignFamily {
    pub fn new(seed: u64, domain_size: u64) -> Result<Self> {
        Ok(Self {
            inner: KWiseHash::new(seed, 4, domain_size, FIELD_PRIME)?,
        })
    }

    #[inline]
    pub fn sign(&self, x: u64) -> i64 {
        if self.inner.field_value(x) & 1 == 0 {
            1
        } else {
            -1
        }
    }

    pub fn eval(&self, x: u64) -> Result<i64> {
        if x >= self.inner.domain_size {
            return Err(SketchError::IndexOutOfRange {
                index: x,
                n: self.inner.domain_size,
            });
        }
        Ok(self.sign(x))
    }

    pub fn seed_bits(&self) -> u64 {
        self.inner.seed_bits()
    }
}

/// Independence needed by the balls-into-bins hash for accuracy `eps`:
/// `max(2, ceil(2 ln(1/eps) / ln ln(1/eps + e)))`.
pub fn independence_for_eps(eps: f64) -> usize {
    let inv = 1.0 / eps;
    let k = (2.0 * inv.ln() / (inv + std::f64::consts::E).ln().ln()).ceil();
    if k.is_finite() {
        (k as usize).max(2)
    } else {
        2
    }
}

/// Index of the least significant set bit; `lsb(0)` is 64.
#[inline]
pub fn lsb(v: u64) -> u32 {
    v.trailing_zeros()
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin, exact for every `n < 2^64`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &p in &WITNESSES {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &WITNESSES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Uniformly random prime in `[lo, hi]`.
///
/// Short intervals are enumerated exactly; long ones use rejection sampling,
/// which terminates quickly because prime gaps below `2^64` are under 1600.
pub fn sample_prime(lo: u64, hi: u64, seed: u64) -> Result<u64> {
    if lo < 2 || hi <= lo {
        return Err(SketchError::invalid(format!(
            "prime interval needs hi > lo >= 2, got [{lo}, {hi}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if hi - lo <= 1 << 16 {
        let primes: Vec<u64> = (lo..=hi).filter(|&v| is_prime(v)).collect();
        if primes.is_empty() {
            return Err(SketchError::NoPrime { lo, hi });
        }
        return Ok(primes[rng.random_range(0..primes.len())]);
    }
    loop {
        let candidate = rng.random_range(lo..=hi);
        if is_prime(candidate) {
            return Ok(candidate);
        }
    }
}
