//! Generators for the hard input distributions and Monte Carlo checks of
//! their separation and concentration properties.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SketchError};
use crate::hashing::{derive_seed, label};
use crate::stream::{
    check_bounded_deletion, exact_fp, exact_g_norm, FrequencyVector, GEstimator, TurnstileStream,
    Update,
};

fn rng(seed: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, label(tag), index))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoinMode {
    Plain,
    BoundedDeletion,
    RandomOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoinStreamSpec {
    pub len: u64,
    /// Heads probability is `1/2 + beta`.
    pub beta: f64,
    pub mode: CoinMode,
    /// Bounded mode starts from `x₁ = ⌈offset·√len⌉`. The default 18 makes
    /// Kolmogorov's bound `16/offset²` on a halving drop at most 0.05.
    pub offset: f64,
}

impl CoinStreamSpec {
    pub fn new(len: u64, beta: f64, mode: CoinMode) -> Self {
        Self {
            len,
            beta,
            mode,
            offset: 18.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.beta) {
            return Err(SketchError::invalid(format!("bias {} outside [0, 1/2]", self.beta)));
        }
        if !(self.offset >= 0.0) {
            return Err(SketchError::invalid("offset must be non-negative"));
        }
        Ok(())
    }

    fn initial(&self) -> u64 {
        match self.mode {
            CoinMode::BoundedDeletion => (self.offset * (self.len as f64).sqrt()).ceil() as u64,
            _ => 0,
        }
    }
}

/// Final value of `x₁` without materializing the stream.
pub fn coin_sum(spec: &CoinStreamSpec, seed: u64) -> Result<i64> {
    spec.validate()?;
    let mut r = rng(seed, "coin", 0);
    let heads = 0.5 + spec.beta;
    let walk: i64 = (0..spec.len)
        .map(|_| if r.random_bool(heads) { 1 } else { -1 })
        .sum();
    Ok(spec.initial() as i64 + walk)
}

/// Single-coordinate `±1` stream: `+1` on heads, `−1` on tails.
pub fn gen_coin_stream(spec: &CoinStreamSpec, seed: u64) -> Result<TurnstileStream> {
    spec.validate()?;
    let mut r = rng(seed, "coin", 0);
    let heads = 0.5 + spec.beta;
    let init = spec.initial();
    let mut updates = vec![Update::new(0, 1); init as usize];
    updates.extend((0..spec.len).map(|_| Update::new(0, if r.random_bool(heads) { 1 } else { -1 })));
    if spec.mode == CoinMode::RandomOrder {
        updates.shuffle(&mut rng(seed, "coin.order", 0));
    }
    Ok(TurnstileStream::from_updates(1, spec.len + init, updates))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoinGapReport {
    pub len: u64,
    pub beta: f64,
    pub threshold: f64,
    /// `G(x¹)/G(x⁰)` per paired trial; infinite when `x⁰ = 0`.
    pub ratios: Vec<f64>,
    pub pass_fraction: f64,
    pub passed: bool,
}

/// Pairs a fair-coin endpoint with a `β = len^{−1/3−ε}` endpoint and checks
/// `G(x¹)/G(x⁰) ≥ len^{(1/6−ε)γ}` in at least 80% of pairs.
pub fn verify_coin_gap(
    g: &GEstimator,
    len: u64,
    eps: f64,
    trials: usize,
    seed: u64,
) -> Result<CoinGapReport> {
    let m = len as f64;
    let beta = m.powf(-1.0 / 3.0 - eps);
    let threshold = m.powf((1.0 / 6.0 - eps) * g.gamma());
    let mut ratios = Vec::with_capacity(trials);
    for t in 0..trials as u64 {
        let fair = CoinStreamSpec::new(len, 0.0, CoinMode::Plain);
        let biased = CoinStreamSpec::new(len, beta, CoinMode::Plain);
        let x0 = coin_sum(&fair, derive_seed(seed, label("gap.fair"), t))?;
        let x1 = coin_sum(&biased, derive_seed(seed, label("gap.biased"), t))?;
        let g0 = exact_g_norm(&FrequencyVector::from_entries(vec![x0]), g);
        let g1 = exact_g_norm(&FrequencyVector::from_entries(vec![x1]), g);
        ratios.push(if g0 == 0.0 { f64::INFINITY } else { g1 / g0 });
    }
    let hits = ratios.iter().filter(|&&r| r >= threshold).count();
    let pass_fraction = if trials == 0 { 0.0 } else { hits as f64 / trials as f64 };
    Ok(CoinGapReport {
        len,
        beta,
        threshold,
        ratios,
        pass_fraction,
        passed: pass_fraction >= 0.8,
    })
}

/// Decides "biased" when the `F₂` estimate reaches `(β·len)²`.
pub fn coin_decision(f2_estimate: f64, beta: f64, len: u64) -> bool {
    f2_estimate >= (beta * len as f64).powi(2)
}

/// Fraction of bounded-mode fair streams whose prefix `ℓ₂` never drops
/// below half its running maximum.
pub fn bounded_mode_fraction(len: u64, trials: usize, seed: u64) -> Result<f64> {
    let mut ok = 0;
    for t in 0..trials as u64 {
        let spec = CoinStreamSpec::new(len, 0.0, CoinMode::BoundedDeletion);
        let s = gen_coin_stream(&spec, derive_seed(seed, label("bounded"), t))?;
        if check_bounded_deletion(&s, 2.0) {
            ok += 1;
        }
    }
    Ok(ok as f64 / trials.max(1) as f64)
}

/// `s` players with `n`-bit inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisjInstance {
    pub n: usize,
    pub s: usize,
    pub yes: bool,
    /// Planted coordinate `I`, drawn for NO instances too.
    pub planted: usize,
    /// Row `j` holds player `j`'s bits.
    pub bits: Vec<Vec<u8>>,
}

impl DisjInstance {
    /// `Y_i = Σ_j X_{j,i}`.
    pub fn column_sums(&self) -> Vec<i64> {
        let mut y = vec![0i64; self.n];
        for row in &self.bits {
            for (yi, &b) in y.iter_mut().zip(row) {
                *yi += b as i64;
            }
        }
        y
    }
}

fn draw_disj(n: usize, s: usize, yes: bool, r: &mut ChaCha8Rng) -> DisjInstance {
    let pr = 1.0 / s as f64;
    let mut bits: Vec<Vec<u8>> = (0..s)
        .map(|_| (0..n).map(|_| r.random_bool(pr) as u8).collect())
        .collect();
    let planted = r.random_range(0..n);
    if yes {
        for row in &mut bits {
            row[planted] = 1;
        }
    }
    DisjInstance {
        n,
        s,
        yes,
        planted,
        bits,
    }
}

/// One draw from the disjointness distribution with `Z = yes`.
pub fn gen_disj(n: usize, s: usize, yes: bool, seed: u64) -> Result<DisjInstance> {
    if s < 2 || n == 0 {
        return Err(SketchError::invalid("disjointness needs s ≥ 2 players and n ≥ 1"));
    }
    Ok(draw_disj(n, s, yes, &mut rng(seed, "disj", 0)))
}

/// `c·ln n/ln ln n`, the NO-instance bound on column sums.
pub fn no_instance_bound(n: usize, c: f64) -> f64 {
    let ln = (n.max(3) as f64).ln();
    c * ln / ln.ln().max(1.0)
}

/// `r` layered instances; instance `T` (1-based) follows the full
/// distribution, the others are NO instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugDisjLayered {
    pub n: usize,
    pub s: usize,
    pub r: usize,
    pub t: usize,
    pub instances: Vec<DisjInstance>,
}

/// Largest `r` for which `10^r·s` fits the update magnitude range.
const MAX_LAYERS: usize = 16;

/// Layered instance with `T` uniform and `Z_T` a fair coin.
pub fn gen_augdisj(n: usize, s: usize, r: usize, seed: u64) -> Result<AugDisjLayered> {
    let mut g = rng(seed, "augdisj", 0);
    let yes = g.random_bool(0.5);
    let t = g.random_range(1..=r.max(1));
    gen_augdisj_with(n, s, r, t, yes, seed)
}

/// Layered instance with a fixed `T` and `Z_T`.
pub fn gen_augdisj_with(
    n: usize,
    s: usize,
    r: usize,
    t: usize,
    yes: bool,
    seed: u64,
) -> Result<AugDisjLayered> {
    if s < 2 || n == 0 {
        return Err(SketchError::invalid("disjointness needs s ≥ 2 players and n ≥ 1"));
    }
    if r == 0 || r > MAX_LAYERS {
        return Err(SketchError::invalid(format!("layer count must lie in 1..={MAX_LAYERS}")));
    }
    if t == 0 || t > r {
        return Err(SketchError::invalid(format!("hidden index {t} outside 1..={r}")));
    }
    let instances = (1..=r)
        .map(|j| draw_disj(n, s, j == t && yes, &mut rng(seed, "augdisj.layer", j as u64)))
        .collect();
    Ok(AugDisjLayered {
        n,
        s,
        r,
        t,
        instances,
    })
}

impl AugDisjLayered {
    pub fn yes(&self) -> bool {
        self.instances[self.t - 1].yes
    }

    pub fn planted(&self) -> usize {
        self.instances[self.t - 1].planted
    }

    fn layer_weight(j: usize) -> i64 {
        10i64.pow(j as u32 - 1)
    }

    /// `Y = Σ_{t ≤ T} 10^{t−1} Y^t`.
    pub fn y(&self) -> FrequencyVector {
        let mut y = vec![0i64; self.n];
        for (j, inst) in self.instances.iter().enumerate().take(self.t) {
            let w = Self::layer_weight(j + 1);
            for (yi, c) in y.iter_mut().zip(inst.column_sums()) {
                *yi += w * c;
            }
        }
        FrequencyVector::from_entries(y)
    }

    /// `Y` with the planted coordinate zeroed.
    pub fn y_without_planted(&self) -> FrequencyVector {
        let mut y = self.y().entries().to_vec();
        y[self.planted()] = 0;
        FrequencyVector::from_entries(y)
    }

    pub fn magnitude_bound(&self) -> u64 {
        10u64.pow(self.r as u32) * self.s as u64
    }

    /// Player `j`'s updates `10^{t−1}·X_j^t` over all layers.
    pub fn player_stream(&self, j: usize) -> TurnstileStream {
        let mut s = TurnstileStream::new(self.n as u64, self.magnitude_bound());
        for (l, inst) in self.instances.iter().enumerate() {
            let w = Self::layer_weight(l + 1);
            for (i, &b) in inst.bits[j].iter().enumerate() {
                if b == 1 {
                    s.push(i as u64, w);
                }
            }
        }
        s
    }

    /// Referee's removal of layers above `T`.
    pub fn referee_stream(&self) -> TurnstileStream {
        let mut s = TurnstileStream::new(self.n as u64, self.magnitude_bound());
        for (l, inst) in self.instances.iter().enumerate().skip(self.t) {
            let w = Self::layer_weight(l + 1);
            for (i, c) in inst.column_sums().into_iter().enumerate() {
                if c != 0 {
                    s.push(i as u64, -w * c);
                }
            }
        }
        s
    }

    /// All players followed by the referee; accumulates to [`Self::y`].
    pub fn protocol_stream(&self) -> TurnstileStream {
        let mut out = TurnstileStream::new(self.n as u64, self.magnitude_bound());
        for j in 0..self.s {
            out.extend(&self.player_stream(j));
        }
        out.extend(&self.referee_stream());
        out
    }
}

/// Players for the ℓ_p reduction: `s = ⌈2p·(αn)^{1/p}⌉`.
pub fn lp_players(n: usize, p: f64, alpha: f64) -> usize {
    (2.0 * p * (alpha * n as f64).powf(1.0 / p)).ceil().max(2.0) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YConcentrationReport {
    pub n: usize,
    pub s: usize,
    pub r: usize,
    pub p: f64,
    pub trials: usize,
    /// Mean of `‖Y_{−I}‖_p^p / (n·10^{pT})`.
    pub normalized_mean: f64,
    /// Smallest `K₁` with mean `≤ K₁^p p^p n 10^{pT}`.
    pub fitted_k1: f64,
    /// Frequency of `|‖Y_{−I}‖_p^p − mean| > 0.1·n·10^{pT}`.
    pub deviation_freq: f64,
    pub passed: bool,
}

/// Monte Carlo moments of `‖Y_{−I}‖_p^p` at `T = r`.
pub fn verify_y_concentration(
    n: usize,
    s: usize,
    r: usize,
    p: f64,
    trials: usize,
    seed: u64,
) -> Result<YConcentrationReport> {
    if !(p >= 2.0) {
        return Err(SketchError::invalid("concentration check needs p ≥ 2"));
    }
    if trials == 0 {
        return Err(SketchError::invalid("need at least one trial"));
    }
    let scale = n as f64 * 10f64.powf(p * r as f64);
    let values: Vec<f64> = (0..trials as u64)
        .map(|i| {
            let inst = gen_augdisj_with(n, s, r, r, false, derive_seed(seed, label("yconc"), i))?;
            Ok(exact_fp(&inst.y_without_planted(), p) / scale)
        })
        .collect::<Result<_>>()?;
    let mean = values.iter().sum::<f64>() / trials as f64;
    let deviation_freq =
        values.iter().filter(|&&v| (v - mean).abs() > 0.1).count() as f64 / trials as f64;
    let fitted_k1 = mean.powf(1.0 / p) / p;
    let passed = n < 1 << 10 || deviation_freq <= 5.0 / n as f64;
    Ok(YConcentrationReport {
        n,
        s,
        r,
        p,
        trials,
        normalized_mean: mean,
        fitted_k1,
        deviation_freq,
        passed,
    })
}

/// Segmented ℓ₀ reduction: Alice fills segment `i` when `u_i = 1`; Bob
/// clears segments after `i*` that Alice filled, then fills segment `i*`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugIndexL0Stream {
    pub n: u64,
    pub levels: usize,
    pub query: usize,
    /// `(start, len)` per segment, segment `i` of length `⌈n^{i/l}⌉/2`.
    pub segments: Vec<(u64, u64)>,
    pub alice: TurnstileStream,
    pub bob_clear: TurnstileStream,
    pub bob_fill: TurnstileStream,
}

/// `u` has `l = t/8` bits; `query` is the 1-based index `i*`.
pub fn gen_augindex_l0(u: &[bool], query: usize, n: u64, t: u32) -> Result<AugIndexL0Stream> {
    if t == 0 || t % 8 != 0 {
        return Err(SketchError::invalid(format!("t = {t} must be a positive multiple of 8")));
    }
    let l = (t / 8) as usize;
    if u.len() != l {
        return Err(SketchError::invalid(format!("expected {l} bits, got {}", u.len())));
    }
    if query == 0 || query > l {
        return Err(SketchError::invalid(format!("query index {query} outside 1..={l}")));
    }
    let mut segments = Vec::with_capacity(l);
    let mut start = 0u64;
    for i in 1..=l {
        let len = (n as f64).powf(i as f64 / l as f64).ceil() as u64 / 2;
        segments.push((start, len));
        start += len;
    }
    if start > n {
        return Err(SketchError::invalid(format!("segments need {start} > n = {n} coordinates")));
    }
    let fill = |s: &mut TurnstileStream, (a, len): (u64, u64), d: i64| {
        for i in a..a + len {
            s.push(i, d);
        }
    };
    let mut alice = TurnstileStream::new(n, 2);
    let mut bob_clear = TurnstileStream::new(n, 2);
    let mut bob_fill = TurnstileStream::new(n, 2);
    for (i, &bit) in u.iter().enumerate() {
        if bit {
            fill(&mut alice, segments[i], 1);
            if i + 1 > query {
                fill(&mut bob_clear, segments[i], -1);
            }
        }
    }
    fill(&mut bob_fill, segments[query - 1], 1);
    Ok(AugIndexL0Stream {
        n,
        levels: l,
        query,
        segments,
        alice,
        bob_clear,
        bob_fill,
    })
}

impl AugIndexL0Stream {
    /// Alice followed by Bob's clearing.
    pub fn first_probe(&self) -> TurnstileStream {
        let mut s = self.alice.clone();
        s.extend(&self.bob_clear);
        s
    }

    /// The first probe followed by Bob's fill.
    pub fn second_probe(&self) -> TurnstileStream {
        let mut s = self.first_probe();
        s.extend(&self.bob_fill);
        s
    }

    /// Bob's rule: `u_{i*} = 0` iff `Z₂ ≥ n^{4/t}·Z₁`.
    pub fn decide(&self, z1: f64, z2: f64, t: u32) -> bool {
        z2 < (self.n as f64).powf(4.0 / t as f64) * z1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pw11Instance {
    pub n: usize,
    pub k: usize,
    /// Disjoint blocks of size `k/2` partitioning a random subset of `[n]`.
    pub family: Vec<Vec<usize>>,
    /// Chosen block, increasing.
    pub support: Vec<usize>,
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub z: Vec<f64>,
}

impl Pw11Instance {
    /// `round(z·2^bits)` as a turnstile stream.
    pub fn quantized_stream(&self, bits: i32) -> TurnstileStream {
        let scale = 2f64.powi(bits);
        let v: Vec<i64> = self.z.iter().map(|&z| (z * scale).round() as i64).collect();
        let m = v.iter().map(|x| x.unsigned_abs()).max().unwrap_or(0).max(1);
        TurnstileStream::from_vector(&FrequencyVector::from_entries(v), m)
    }
}

/// Signal `±2√(n/k)` on one block of a seeded random partition, plus
/// standard Gaussian noise.
pub fn gen_pw11(n: usize, k: usize, seed: u64) -> Result<Pw11Instance> {
    if k == 0 || k % 2 != 0 || k > n {
        return Err(SketchError::invalid(format!("k = {k} must be even and at most n = {n}")));
    }
    let half = k / 2;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng(seed, "pw11.family", 0));
    let family: Vec<Vec<usize>> = perm
        .chunks_exact(half)
        .map(|c| {
            let mut b = c.to_vec();
            b.sort_unstable();
            b
        })
        .collect();
    let mut r = rng(seed, "pw11.draw", 0);
    let support = family[r.random_range(0..family.len())].clone();
    let amp = 2.0 * (n as f64 / k as f64).sqrt();
    let mut x = vec![0.0; n];
    for &i in &support {
        x[i] = if r.random_bool(0.5) { amp } else { -amp };
    }
    let mut nr = rng(seed, "pw11.noise", 0);
    let w: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut nr)).collect();
    let z = x.iter().zip(&w).map(|(a, b)| a + b).collect();
    Ok(Pw11Instance {
        n,
        k,
        family,
        support,
        x,
        w,
        z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::exact_moment;

    #[test]
    fn all_heads() {
        let spec = CoinStreamSpec::new(1000, 0.5, CoinMode::Plain);
        assert_eq!(coin_sum(&spec, 1).unwrap(), 1000);
        let s = gen_coin_stream(&spec, 1).unwrap();
        assert_eq!(s.updates().iter().map(|u| u.delta).sum::<i64>(), 1000);
    }

    #[test]
    fn coin_stream_matches_sum() {
        for mode in [CoinMode::Plain, CoinMode::BoundedDeletion, CoinMode::RandomOrder] {
            let spec = CoinStreamSpec::new(5000, 0.1, mode);
            let s = gen_coin_stream(&spec, 9).unwrap();
            let total: i64 = s.updates().iter().map(|u| u.delta).sum();
            assert_eq!(total, coin_sum(&spec, 9).unwrap());
            assert!(s.validate().is_ok());
        }
    }

    #[test]
    fn disj_yes_column() {
        let d = gen_disj(100, 8, true, 3).unwrap();
        assert_eq!(d.column_sums()[d.planted], 8);
        assert!(gen_disj(10, 1, false, 0).is_err());
    }

    #[test]
    fn augdisj_protocol_accumulates_to_y() {
        let a = gen_augdisj_with(64, 4, 4, 2, true, 5).unwrap();
        let x = crate::stream::accumulate(&a.protocol_stream()).unwrap();
        assert_eq!(x, a.y());
        assert!(a.y().entries()[a.planted()] >= 10 * 4);
    }

    #[test]
    fn augindex_examples() {
        let inst = gen_augindex_l0(&[false, false], 2, 1 << 10, 16).unwrap();
        let z1 = exact_moment(&crate::stream::accumulate(&inst.first_probe()).unwrap(), 0.0);
        let z2 = exact_moment(&crate::stream::accumulate(&inst.second_probe()).unwrap(), 0.0);
        assert_eq!((z1, z2), (0.0, 512.0));
        assert!(gen_augindex_l0(&[true], 1, 1 << 10, 12).is_err());
    }

    #[test]
    fn pw11_family_disjoint() {
        let inst = gen_pw11(256, 16, 2).unwrap();
        assert_eq!(inst.support.len(), 8);
        assert_eq!(inst.family.len(), 32);
        assert!(gen_pw11(100, 7, 0).is_err());
    }
}
