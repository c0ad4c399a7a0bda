//! Distinct-elements (ℓ₀) estimation in turnstile streams.
//!
//! [`RoughL0Sketch`] gives an `n^{1/t}`-approximation from `t` subsampling
//! levels of `c` buckets, each kept in `K` random-sign copies modulo a small
//! prime. [`LevelSketch`] holds a window of balls-into-bins levels; the
//! two- and three-pass estimators combine the two.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blob::{Reader, Writer};
use crate::error::{Result, SketchError};
use crate::hashing::{
    derive_seed, independence_for_eps, label, lsb, sample_prime, KWiseHash, SignFamily,
    FIELD_PRIME,
};
use crate::sketch::{residue_bits, EstimateReport, LinearSketch, SpaceReport};
use crate::stream::{Update, UpdateSource};

/// Constant sets for the rough estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum L0Profile {
    /// `c₁ = 25, c₂ = 100, β = 1/8`, hence `c = 40000` buckets per level.
    Full,
    /// `c₁ = 5, c₂ = 20, β = 1/2`, hence `c = 100` buckets per level.
    Desk,
}

impl std::str::FromStr for L0Profile {
    type Err = SketchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "desk" => Ok(Self::Desk),
            other => Err(SketchError::invalid(format!(
                "unknown l0 profile {other:?} (expected full or desk)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoughParams {
    pub t: usize,
    pub buckets: usize,
    pub copies: usize,
    pub c1: usize,
    pub c2: f64,
    pub beta: f64,
    /// Overrides the default prime interval `[c·log M, c³·log² M]`.
    pub prime_range: Option<(u64, u64)>,
    /// When no level is crowded, report the level-0 occupancy instead of `c₂`.
    pub exact_small: bool,
}

impl RoughParams {
    pub fn profile(profile: L0Profile, t: usize) -> Self {
        let (c1, c2, beta) = match profile {
            L0Profile::Full => (25usize, 100.0, 0.125),
            L0Profile::Desk => (5usize, 20.0, 0.5),
        };
        let buckets = ((c1 * c1) as f64 / (beta * beta)).round() as usize;
        Self {
            t,
            buckets,
            copies: min_copies(c1),
            c1,
            c2,
            beta,
            prime_range: None,
            exact_small: true,
        }
    }

    pub fn with_copies(mut self, copies: usize) -> Self {
        self.copies = copies;
        self
    }

    pub fn with_buckets(mut self, buckets: usize) -> Self {
        self.buckets = buckets;
        self
    }

    pub fn with_prime_range(mut self, lo: u64, hi: u64) -> Self {
        self.prime_range = Some((lo, hi));
        self
    }

    /// Returns `c₂` when no level is crowded, as in the original rule.
    pub fn verbatim(mut self) -> Self {
        self.exact_small = false;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.t == 0 || self.buckets == 0 || self.copies == 0 {
            return Err(SketchError::invalid("t, c and K must be positive"));
        }
        if self.c1 >= self.buckets {
            return Err(SketchError::invalid("c1 must be below the bucket count"));
        }
        if !(self.c2 > 0.0) {
            return Err(SketchError::invalid("c2 must be positive"));
        }
        Ok(())
    }
}

/// Smallest `K` with `K ≥ log_{3/2}(100·c₁)`.
pub fn min_copies(c1: usize) -> usize {
    ((100.0 * c1 as f64).ln() / 1.5f64.ln()).ceil() as usize
}

/// `⌈log₂ max(M, 2)⌉`, used wherever a `log M` factor sizes a prime.
fn log_m(m_bound: u64) -> u64 {
    64 - u64::from((m_bound.max(2) - 1).leading_zeros())
}

/// `⌊n^{1/t}⌋` computed exactly.
pub fn integer_root(n: u64, t: usize) -> u64 {
    if t <= 1 {
        return n;
    }
    let mut r = (n as f64).powf(1.0 / t as f64).round() as u64;
    let pow_le = |r: u64| -> bool {
        let mut acc: u128 = 1;
        for _ in 0..t {
            acc *= r as u128;
            if acc > n as u128 {
                return false;
            }
        }
        true
    };
    while r > 0 && !pow_le(r) {
        r -= 1;
    }
    while pow_le(r + 1) {
        r += 1;
    }
    r
}

#[derive(Debug, Clone)]
pub struct RoughL0Sketch {
    n: u64,
    m_bound: u64,
    params: RoughParams,
    seed: u64,
    base: u64,
    prime: u64,
    h: KWiseHash,
    g: KWiseHash,
    signs: Vec<SignFamily>,
    counters: Vec<u64>,
}

const ROUGH_MAGIC: &[u8; 4] = b"RL0S";

impl RoughL0Sketch {
    pub fn new(n: u64, m_bound: u64, params: RoughParams, seed: u64) -> Result<Self> {
        params.validate()?;
        if n < 2 {
            return Err(SketchError::invalid("dimension must be at least 2"));
        }
        let base = integer_root(n, params.t);
        if base < 2 {
            return Err(SketchError::invalid(format!(
                "n^(1/t) < 2 for n = {n}, t = {}",
                params.t
            )));
        }
        let (lo, hi) = match params.prime_range {
            Some(r) => r,
            None => {
                let c = params.buckets as u64;
                let lm = log_m(m_bound);
                let lo = (c * lm).max(3);
                let hi = c
                    .saturating_mul(c)
                    .saturating_mul(c)
                    .saturating_mul(lm * lm)
                    .min(1 << 62);
                (lo, hi.max(lo + 1))
            }
        };
        let prime = sample_prime(lo, hi, derive_seed(seed, label("rough.prime"), 0))?;
        let h = KWiseHash::new(derive_seed(seed, label("rough.h"), 0), 2, n, n)?;
        let g = KWiseHash::new(
            derive_seed(seed, label("rough.g"), 0),
            2,
            n,
            params.buckets as u64,
        )?;
        let signs = (0..params.copies)
            .map(|j| SignFamily::new(derive_seed(seed, label("rough.s"), j as u64), n))
            .collect::<Result<Vec<_>>>()?;
        let counters = vec![0; params.t * params.copies * params.buckets];
        Ok(Self {
            n,
            m_bound,
            params,
            seed,
            base,
            prime,
            h,
            g,
            signs,
            counters,
        })
    }

    pub fn params(&self) -> &RoughParams {
        &self.params
    }

    pub fn prime(&self) -> u64 {
        self.prime
    }

    pub fn counters(&self) -> &[u64] {
        &self.counters
    }

    pub fn counter_count(&self) -> usize {
        self.counters.len()
    }

    /// Deepest level index reached by `x`, capped at `t − 1`.
    fn depth(&self, x: u64) -> usize {
        let mut v = self.h.eval_unchecked(x);
        let mut j = 0;
        while j + 1 < self.params.t && v % self.base == 0 {
            v /= self.base;
            j += 1;
        }
        j
    }

    fn slot(&self, level: usize, copy: usize, bucket: usize) -> usize {
        (level * self.params.copies + copy) * self.params.buckets + bucket
    }

    /// Number of buckets at `level` with a nonzero counter in some copy.
    pub fn occupied(&self, level: usize) -> usize {
        let (k, c) = (self.params.copies, self.params.buckets);
        let block = &self.counters[level * k * c..(level + 1) * k * c];
        (0..c)
            .filter(|&b| (0..k).any(|copy| block[copy * c + b] != 0))
            .count()
    }

    /// Largest level with more than `c₁` occupied buckets.
    pub fn crowded_level(&self) -> Option<usize> {
        (0..self.params.t)
            .rev()
            .find(|&j| self.occupied(j) > self.params.c1)
    }

    pub fn estimate(&self) -> EstimateReport {
        let value = match self.crowded_level() {
            Some(j) => self.params.c2 * (self.n as f64).powf(j as f64 / self.params.t as f64),
            None if self.params.exact_small => self.occupied(0) as f64,
            None => self.params.c2,
        };
        EstimateReport {
            value,
            factor: self.factor(),
            success_prob: 0.9,
            space: self.space(),
        }
    }

    /// Promised approximation factor `n^{1/t}`.
    pub fn factor(&self) -> f64 {
        (self.n as f64).powf(1.0 / self.params.t as f64)
    }

    /// Blob layout after the header: `n, M, t, c, K, c₁, c₂ (f64 bits),
    /// β (f64 bits), exact_small, prime_lo, prime_hi, seed, p`, then the
    /// `t·K·c` counters level-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        let (lo, hi) = self.params.prime_range.unwrap_or((0, 0));
        let mut w = Writer::new(ROUGH_MAGIC);
        w.u64(self.n)
            .u64(self.m_bound)
            .u64(self.params.t as u64)
            .u64(self.params.buckets as u64)
            .u64(self.params.copies as u64)
            .u64(self.params.c1 as u64)
            .f64(self.params.c2)
            .f64(self.params.beta)
            .u64(self.params.exact_small as u64)
            .u64(lo)
            .u64(hi)
            .u64(self.seed)
            .u64(self.prime)
            .u64s(&self.counters);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, ROUGH_MAGIC)?;
        let n = r.u64()?;
        let m_bound = r.u64()?;
        let params = RoughParams {
            t: r.u64()? as usize,
            buckets: r.u64()? as usize,
            copies: r.u64()? as usize,
            c1: r.u64()? as usize,
            c2: r.f64()?,
            beta: r.f64()?,
            exact_small: r.u64()? != 0,
            prime_range: match (r.u64()?, r.u64()?) {
                (0, 0) => None,
                range => Some(range),
            },
        };
        let seed = r.u64()?;
        let prime = r.u64()?;
        let mut sk = Self::new(n, m_bound, params, seed)?;
        if sk.prime != prime {
            return Err(SketchError::Blob("prime does not match seed".into()));
        }
        sk.counters = r.u64s(sk.counters.len())?;
        r.finish()?;
        if sk.counters.iter().any(|&v| v >= prime) {
            return Err(SketchError::Blob("counter not reduced".into()));
        }
        Ok(sk)
    }
}

impl LinearSketch for RoughL0Sketch {
    fn update(&mut self, u: Update) {
        assert!(u.index < self.n, "index {} out of range", u.index);
        let p = self.prime;
        let plus = u.delta.rem_euclid(p as i64) as u64;
        if plus == 0 {
            return;
        }
        let minus = p - plus;
        let depth = self.depth(u.index);
        let bucket = self.g.eval_unchecked(u.index) as usize;
        for copy in 0..self.params.copies {
            let add = if self.signs[copy].sign(u.index) > 0 {
                plus
            } else {
                minus
            };
            for level in 0..=depth {
                let i = self.slot(level, copy, bucket);
                let v = self.counters[i] + add;
                self.counters[i] = if v >= p { v - p } else { v };
            }
        }
    }

    fn merge(&mut self, other: &Self) -> Result<()> {
        if self.n != other.n
            || self.params != other.params
            || self.seed != other.seed
            || self.prime != other.prime
        {
            return Err(SketchError::Incompatible(
                "rough l0 sketches differ in parameters or seed".into(),
            ));
        }
        let p = self.prime;
        for (a, &b) in self.counters.iter_mut().zip(&other.counters) {
            let v = *a + b;
            *a = if v >= p { v - p } else { v };
        }
        Ok(())
    }

    fn space(&self) -> SpaceReport {
        let counter_bits = self.counters.len() as u64 * residue_bits(self.prime);
        let seed_bits = self.h.seed_bits()
            + self.g.seed_bits()
            + self.signs.iter().map(|s| s.seed_bits()).sum::<u64>();
        SpaceReport::new(counter_bits, seed_bits, residue_bits(self.prime))
    }
}

/// `level_scale · ln(1 − T/K) / ln(1 − 1/K)`: the number of balls that
/// leaves `T` of `K` bins occupied in expectation.
pub fn balls_to_bins_estimate(occupied: usize, bins: usize, level_scale: f64) -> Result<f64> {
    if bins < 2 {
        return Err(SketchError::invalid("need at least two bins"));
    }
    if occupied >= bins {
        return Err(SketchError::LevelSaturated { occupied, bins });
    }
    if occupied == 0 {
        return Ok(0.0);
    }
    let k = bins as f64;
    Ok(level_scale * (-(occupied as f64) / k).ln_1p() / (-1.0 / k).ln_1p())
}

/// A window of consecutive subsampling levels, each with `K` bins holding
/// random linear combinations modulo a prime.
///
/// Item `x` belongs to every level `j ≤ lsb(h₁(x))`; within a level it lands
/// in bin `h₃(h₂(x))` with coefficient `u[h₄(h₂(x))]`.
#[derive(Debug, Clone)]
pub struct LevelSketch {
    n: u64,
    m_bound: u64,
    bins: usize,
    lo: usize,
    levels: usize,
    independence: usize,
    seed: u64,
    depth_bits: u32,
    prime: u64,
    h1: KWiseHash,
    h2: KWiseHash,
    h3: KWiseHash,
    h4: KWiseHash,
    coeffs: Vec<u64>,
    counters: Vec<u64>,
}

const LEVEL_MAGIC: &[u8; 4] = b"LL0S";

impl LevelSketch {
    /// Levels `lo..lo+levels`, `bins` bins each, `independence`-wise `h₃`.
    pub fn new(
        n: u64,
        m_bound: u64,
        bins: usize,
        lo: usize,
        levels: usize,
        independence: usize,
        seed: u64,
    ) -> Result<Self> {
        if n < 1 || bins < 2 || levels == 0 {
            return Err(SketchError::invalid(
                "level sketch needs n ≥ 1, at least two bins and one level",
            ));
        }
        let depth_bits = 64 - (n.max(2) - 1).leading_zeros();
        let k = bins as u64;
        let cube = k.saturating_mul(k).saturating_mul(k).min(FIELD_PRIME);
        let d = 100u64
            .saturating_mul(k)
            .saturating_mul(log_m(m_bound));
        if d >= 1 << 40 {
            return Err(SketchError::invalid("bin count too large for the prime field"));
        }
        let hi = d.saturating_mul(d).saturating_mul(d).min(1 << 61);
        let prime = sample_prime(d, hi, derive_seed(seed, label("level.prime"), 0))?;
        let h1 = KWiseHash::new(derive_seed(seed, label("level.h1"), 0), 2, n, 1 << depth_bits)?;
        let h2 = KWiseHash::new(derive_seed(seed, label("level.h2"), 0), 2, n, cube)?;
        let h3 = KWiseHash::new(
            derive_seed(seed, label("level.h3"), 0),
            independence.max(2),
            cube,
            k,
        )?;
        let h4 = KWiseHash::new(derive_seed(seed, label("level.h4"), 0), 2, cube, k)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, label("level.u"), 0));
        let coeffs = (0..bins).map(|_| rng.random_range(0..prime)).collect();
        Ok(Self {
            n,
            m_bound,
            bins,
            lo,
            levels,
            independence: independence.max(2),
            seed,
            depth_bits,
            prime,
            h1,
            h2,
            h3,
            h4,
            coeffs,
            counters: vec![0; bins * levels],
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn prime(&self) -> u64 {
        self.prime
    }

    /// Inclusive range of maintained levels.
    pub fn window(&self) -> (usize, usize) {
        (self.lo, self.lo + self.levels - 1)
    }

    pub fn counter_count(&self) -> usize {
        self.counters.len()
    }

    pub fn counters(&self) -> &[u64] {
        &self.counters
    }

    /// Occupied bins at absolute level `level`; zero outside the window.
    pub fn occupied(&self, level: usize) -> usize {
        if level < self.lo || level >= self.lo + self.levels {
            return 0;
        }
        let i = level - self.lo;
        self.counters[i * self.bins..(i + 1) * self.bins]
            .iter()
            .filter(|&&v| v != 0)
            .count()
    }

    /// Balls-to-bins inversion at `level`, scaled by `2^level`.
    pub fn level_estimate(&self, level: usize) -> Result<f64> {
        balls_to_bins_estimate(self.occupied(level), self.bins, (level as f64).exp2())
    }

    /// Blob layout after the header: `n, M, K, lo, levels, k, seed, p`,
    /// then the `levels·K` counters level-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(LEVEL_MAGIC);
        w.u64(self.n)
            .u64(self.m_bound)
            .u64(self.bins as u64)
            .u64(self.lo as u64)
            .u64(self.levels as u64)
            .u64(self.independence as u64)
            .u64(self.seed)
            .u64(self.prime)
            .u64s(&self.counters);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, LEVEL_MAGIC)?;
        let (n, m_bound, bins, lo, levels, k, seed, prime) = (
            r.u64()?,
            r.u64()?,
            r.u64()? as usize,
            r.u64()? as usize,
            r.u64()? as usize,
            r.u64()? as usize,
            r.u64()?,
            r.u64()?,
        );
        let mut sk = Self::new(n, m_bound, bins, lo, levels, k, seed)?;
        if sk.prime != prime {
            return Err(SketchError::Blob("prime does not match seed".into()));
        }
        sk.counters = r.u64s(sk.counters.len())?;
        r.finish()?;
        if sk.counters.iter().any(|&v| v >= prime) {
            return Err(SketchError::Blob("counter not reduced".into()));
        }
        Ok(sk)
    }
}

impl LinearSketch for LevelSketch {
    fn update(&mut self, u: Update) {
        assert!(u.index < self.n, "index {} out of range", u.index);
        let depth = (lsb(self.h1.eval_unchecked(u.index)).min(self.depth_bits)) as usize;
        if depth < self.lo {
            return;
        }
        let top = depth.min(self.lo + self.levels - 1);
        let key = self.h2.eval_unchecked(u.index);
        let bin = self.h3.eval_unchecked(key) as usize;
        let coeff = self.coeffs[self.h4.eval_unchecked(key) as usize];
        let p = self.prime;
        let v = u.delta.rem_euclid(p as i64) as u128;
        let add = ((v * coeff as u128) % p as u128) as u64;
        if add == 0 {
            return;
        }
        for level in self.lo..=top {
            let i = (level - self.lo) * self.bins + bin;
            let s = self.counters[i] + add;
            self.counters[i] = if s >= p { s - p } else { s };
        }
    }

    fn merge(&mut self, other: &Self) -> Result<()> {
        if (self.n, self.bins, self.lo, self.levels, self.independence, self.seed)
            != (
                other.n,
                other.bins,
                other.lo,
                other.levels,
                other.independence,
                other.seed,
            )
        {
            return Err(SketchError::Incompatible(
                "level sketches differ in parameters or seed".into(),
            ));
        }
        let p = self.prime;
        for (a, &b) in self.counters.iter_mut().zip(&other.counters) {
            let v = *a + b;
            *a = if v >= p { v - p } else { v };
        }
        Ok(())
    }

    fn space(&self) -> SpaceReport {
        let counter_bits = self.counters.len() as u64 * residue_bits(self.prime);
        let seed_bits = self.h1.seed_bits()
            + self.h2.seed_bits()
            + self.h3.seed_bits()
            + self.h4.seed_bits()
            + self.bins as u64 * residue_bits(self.prime);
        SpaceReport::new(counter_bits, seed_bits, residue_bits(self.prime))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoPassConfig {
    pub eps: f64,
    /// Bins per level are `⌈kappa/ε²⌉`.
    pub kappa: f64,
    /// Fraction of occupied bins that marks a level as crowded.
    pub threshold: f64,
    /// Largest accepted ε.
    pub eps0: f64,
    /// Extra levels kept on each side of the pass-one window.
    pub extra_levels: usize,
    pub rough_profile: L0Profile,
    /// Overrides [`independence_for_eps`].
    pub independence: Option<usize>,
}

impl Default for TwoPassConfig {
    fn default() -> Self {
        Self {
            eps: 0.1,
            kappa: 100.0,
            threshold: 0.011,
            eps0: 0.1,
            extra_levels: 10,
            rough_profile: L0Profile::Desk,
            independence: None,
        }
    }
}

impl TwoPassConfig {
    pub fn with_eps(eps: f64) -> Self {
        Self {
            eps,
            ..Self::default()
        }
    }

    pub fn bins(&self) -> usize {
        (self.kappa / (self.eps * self.eps)).ceil() as usize
    }
}

/// Level count used by the first pass so that `n^{1/t} ≈ log₂ n`.
pub fn first_pass_levels(n: u64) -> usize {
    let l = (64 - (n.max(2) - 1).leading_zeros()) as f64;
    let t = (l / l.log2().max(1.0)).ceil() as usize;
    t.clamp(1, l as usize)
}

/// Two-pass (1 ± ε) estimate of ℓ₀.
pub fn twopass_estimate(
    source: &mut dyn UpdateSource,
    cfg: &TwoPassConfig,
    master_seed: u64,
) -> Result<EstimateReport> {
    if !(cfg.eps > 0.0 && cfg.eps <= cfg.eps0) {
        return Err(SketchError::invalid(format!(
            "eps must lie in (0, {}], got {}",
            cfg.eps0, cfg.eps
        )));
    }
    twopass_passes(source, cfg, master_seed, 0)
}

fn feed_pass(
    source: &mut dyn UpdateSource,
    pass: usize,
    sketches: &mut [&mut dyn FnMut(Update)],
) -> Result<()> {
    for u in source.pass(pass)? {
        for s in sketches.iter_mut() {
            s(u);
        }
    }
    Ok(())
}

fn twopass_passes(
    source: &mut dyn UpdateSource,
    cfg: &TwoPassConfig,
    master_seed: u64,
    first_pass: usize,
) -> Result<EstimateReport> {
    let n = source.dimension();
    let m_bound = source.magnitude_bound();
    let t1 = first_pass_levels(n);
    let mut rough = RoughL0Sketch::new(
        n,
        m_bound,
        RoughParams::profile(cfg.rough_profile, t1),
        derive_seed(master_seed, label("twopass.rough"), 0),
    )?;
    feed_pass(source, first_pass, &mut [&mut |u| rough.update(u)])?;
    let rough_value = rough.estimate().value.max(1.0);

    let bins = cfg.bins();
    let k = cfg.independence.unwrap_or_else(|| independence_for_eps(cfg.eps));
    let spread = rough.factor().log2().ceil().max(1.0) as i64;
    let base = rough_value.log2().floor() as i64 - (bins as f64).log2().floor() as i64;
    let extra = cfg.extra_levels as i64;
    let lo = (base - spread - extra).max(0) as usize;
    let levels = (2 * spread + 2 * extra + 1) as usize;
    let mut big = LevelSketch::new(
        n,
        m_bound,
        bins,
        lo,
        levels,
        k,
        derive_seed(master_seed, label("twopass.big"), 0),
    )?;
    let mut small = LevelSketch::new(
        n,
        m_bound,
        bins,
        0,
        1,
        k,
        derive_seed(master_seed, label("twopass.small"), 0),
    )?;
    feed_pass(
        source,
        first_pass + 1,
        &mut [&mut |u| big.update(u), &mut |u| small.update(u)],
    )?;

    let space = rough.space().combine(big.space()).combine(small.space());
    let small_value = small.level_estimate(0).ok();
    let small_limit = 1.0 / (32.0 * cfg.eps * cfg.eps);
    let value = match small_value {
        Some(v) if v <= small_limit => v,
        _ => {
            let (wlo, whi) = big.window();
            let need = cfg.threshold * bins as f64;
            let level = (wlo..=whi)
                .rev()
                .find(|&j| big.occupied(j) as f64 > need)
                .unwrap_or(wlo);
            big.level_estimate(level)?
        }
    };
    Ok(EstimateReport {
        value,
        factor: 1.0 + cfg.eps,
        success_prob: 0.8,
        space,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThreePassConfig {
    pub eps: f64,
    /// Pass-three bins are `⌈kappa/ε²⌉`.
    pub kappa: f64,
    /// Target survivors at the single level, as a fraction of the bins.
    pub load: f64,
    pub eps0: f64,
    /// Settings of the constant-factor two-pass stage.
    pub coarse: TwoPassConfig,
}

impl Default for ThreePassConfig {
    fn default() -> Self {
        Self {
            eps: 0.05,
            kappa: 32.0,
            load: 1.0 / 16.0,
            eps0: 0.1,
            coarse: TwoPassConfig::with_eps(0.25),
        }
    }
}

impl ThreePassConfig {
    pub fn with_eps(eps: f64) -> Self {
        Self {
            eps,
            ..Self::default()
        }
    }

    pub fn bins(&self) -> usize {
        (self.kappa / (self.eps * self.eps)).ceil() as usize
    }
}

/// Three-pass (1 ± ε) estimate: a constant-factor two-pass estimate fixes a
/// single level that the third pass fills.
pub fn threepass_estimate(
    source: &mut dyn UpdateSource,
    cfg: &ThreePassConfig,
    master_seed: u64,
) -> Result<EstimateReport> {
    if !(cfg.eps > 0.0 && cfg.eps <= cfg.eps0) {
        return Err(SketchError::invalid(format!(
            "eps must lie in (0, {}], got {}",
            cfg.eps0, cfg.eps
        )));
    }
    let coarse = twopass_passes(
        source,
        &cfg.coarse,
        derive_seed(master_seed, label("threepass.coarse"), 0),
        0,
    )?;
    let (level, mut fine) = threepass_level(source, cfg, coarse.value, master_seed)?;
    feed_pass(source, 2, &mut [&mut |u| fine.update(u)])?;
    Ok(EstimateReport {
        value: fine.level_estimate(level)?,
        factor: 1.0 + cfg.eps,
        success_prob: 0.75,
        space: coarse.space.combine(fine.space()),
    })
}

/// The single pass-three level for a constant-factor estimate `coarse`.
pub fn threepass_level(
    source: &dyn UpdateSource,
    cfg: &ThreePassConfig,
    coarse: f64,
    master_seed: u64,
) -> Result<(usize, LevelSketch)> {
    let bins = cfg.bins();
    let target = cfg.load * bins as f64;
    let level = if coarse > target {
        (coarse / target).log2().floor() as usize
    } else {
        0
    };
    let sk = LevelSketch::new(
        source.dimension(),
        source.magnitude_bound(),
        bins,
        level,
        1,
        independence_for_eps(cfg.eps),
        derive_seed(master_seed, label("threepass.fine"), 0),
    )?;
    Ok((level, sk))
}
