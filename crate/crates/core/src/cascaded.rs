//! Precision sampling, the standalone F_q estimator for `q > 2`, and the
//! cascaded `(p, q)`-norm sketch.
//!
//! Weights are `w = k/u` for pairwise-independent `u` uniform on `(0, 1]`,
//! clamped at `n³k`. Reconstruction keeps the terms whose weighted
//! approximation clears a threshold `T` and adds `max(â_i, T/k)` for each,
//! a Horvitz–Thompson estimate since a term is kept with probability
//! `min(1, k·a_i/T)`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SketchError};
use crate::hashing::{derive_seed, label, KWiseHash, FIELD_PRIME};
use crate::heavy::CountSketchTable;
use crate::lp::AmsSketch;
use crate::lp_large::{derive_q, NormEstimator};
use crate::sketch::{median, EstimateReport, LinearSketch, SpaceReport, REAL_WORD_BITS};
use crate::stream::{MatrixStream, Update};

/// Consistency constant for the median absolute deviation of a Gaussian.
const MAD_SCALE: f64 = 0.674_489_750_196_081_7;

/// Fixed-point scale applied to real coefficients so sketches stay integral.
const COEFF_BITS: i32 = 20;

#[derive(Debug, Clone)]
pub struct PrecisionWeights {
    n: u64,
    k: f64,
    rho: f64,
    eps: f64,
    cap: f64,
    hash: KWiseHash,
}

/// Draws `w_1..w_n` from `W(k)`, `k = ⌈9/(ρε²)⌉`.
pub fn draw_weights(n: u64, rho: f64, eps: f64, seed: u64) -> Result<PrecisionWeights> {
    let nf = n.max(2) as f64;
    if !(rho >= 1.0 / nf - 1e-12 && rho <= 1.0) {
        return Err(SketchError::invalid(format!("rho = {rho} outside [1/n, 1]")));
    }
    if !(eps >= 1.0 / nf - 1e-12 && eps <= 1.0 / 3.0 + 1e-12) {
        return Err(SketchError::invalid(format!("eps = {eps} outside [1/n, 1/3]")));
    }
    let k = (9.0 / (rho * eps * eps)).ceil();
    Ok(PrecisionWeights {
        n,
        k,
        rho,
        eps,
        cap: nf.powi(3) * k,
        hash: KWiseHash::new(seed, 2, n.max(1), FIELD_PRIME)?,
    })
}

impl PrecisionWeights {
    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Upper clamp `n³k`; weights at the clamp form the rare complement of
    /// the high-probability event.
    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn weight(&self, i: u64) -> f64 {
        (self.k / self.hash.unit(i)).min(self.cap)
    }

    /// Selection threshold `T = 4/ε`.
    pub fn threshold(&self) -> f64 {
        4.0 / self.eps
    }

    pub fn seed_bits(&self) -> u64 {
        self.hash.seed_bits()
    }
}

/// A value with additive slack `rho` and multiplicative slack `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproximatorPair {
    pub value: f64,
    pub rho: f64,
    pub f: f64,
}

impl ApproximatorPair {
    /// `τ/f − ρ ≤ value ≤ fτ + ρ`.
    pub fn approximates(&self, tau: f64) -> bool {
        tau / self.f - self.rho <= self.value && self.value <= self.f * tau + self.rho
    }
}

/// Estimate of `Σ a_i` from per-term approximations `â_i` whose additive
/// error is about `1/w_i`.
pub fn reconstruct(weights: &PrecisionWeights, approx: &[f64], f: f64) -> ApproximatorPair {
    let t = weights.threshold();
    let floor = t / weights.k();
    let value = approx
        .iter()
        .enumerate()
        .filter(|&(i, &a)| weights.weight(i as u64) * a > t)
        .map(|(_, &a)| a.max(floor))
        .sum();
    ApproximatorPair {
        value,
        rho: weights.rho(),
        f: f * weights.eps().exp(),
    }
}

/// `value` on the fixed-point grid used by the precision-sampled sketches.
fn fixed(value: f64) -> i128 {
    (value * 2f64.powi(COEFF_BITS)).round() as i128
}

fn unfixed(value: f64) -> f64 {
    value / 2f64.powi(COEFF_BITS)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FqParams {
    pub rows: usize,
    pub width: usize,
    /// Selection cut in units of the estimated per-bucket noise.
    pub tau: f64,
}

impl FqParams {
    /// Width `⌈c·n^{1−2/q}·log₂² n⌉`, five rows, `τ = 3`.
    pub fn for_dimension(n: u64, q: f64, width_constant: f64) -> Self {
        let nf = n.max(2) as f64;
        let width = (width_constant * nf.powf(1.0 - 2.0 / q) * nf.log2().powi(2)).ceil();
        Self {
            rows: 5,
            width: width.max(1.0) as usize,
            tau: 3.0,
        }
    }

    /// Bits the sketch would occupy, without allocating it.
    pub fn planned_space(&self) -> SpaceReport {
        let counters = (self.rows * self.width) as u64 * 64;
        let seeds = self.rows as u64 * (2 + 4) * 61 + 2 * 61;
        SpaceReport::new(counters, seeds, 2 * REAL_WORD_BITS)
    }
}

/// Constant-factor F_q sketch for `q > 2`: CountSketch of `x_i·w_i^{1/q}`
/// decoded by precision sampling.
#[derive(Debug, Clone)]
pub struct FqSketch {
    n: u64,
    q: f64,
    params: FqParams,
    weights: PrecisionWeights,
    table: CountSketchTable,
}

impl FqSketch {
    pub fn new(n: u64, q: f64, seed: u64) -> Result<Self> {
        Self::with_params(n, q, FqParams::for_dimension(n, q, 1.0), seed)
    }

    pub fn with_params(n: u64, q: f64, params: FqParams, seed: u64) -> Result<Self> {
        if !(q > 2.0) {
            return Err(SketchError::invalid(format!("F_q sketch needs q > 2, got {q}")));
        }
        let weights = draw_weights(
            n.max(4),
            0.25,
            1.0 / 3.0,
            derive_seed(seed, label("fq.weights"), 0),
        )?;
        let table = CountSketchTable::new(
            n,
            params.rows,
            params.width,
            derive_seed(seed, label("fq.table"), 0),
        )?;
        Ok(Self {
            n,
            q,
            params,
            weights,
            table,
        })
    }

    pub fn table(&self) -> &CountSketchTable {
        &self.table
    }

    fn coefficient(&self, i: u64) -> i128 {
        fixed(self.weights.weight(i).powf(1.0 / self.q))
    }

    /// Adds `value·w_i^{1/q}` at coordinate `i`.
    pub fn add(&mut self, i: u64, value: i128) {
        let c = self.coefficient(i);
        self.table.add(i, c * value);
    }

    /// Estimate of `‖x‖_q^q`.
    pub fn estimate_fq(&self) -> f64 {
        if self.table.is_zero() {
            return 0.0;
        }
        let noise = unfixed(self.table.median_abs_counter()) / MAD_SCALE;
        let cut = self.params.tau * noise;
        let cut_q = cut.powf(self.q);
        let floor = cut_q / self.weights.k();
        let mut total = 0.0;
        for i in 0..self.n {
            let z = unfixed(self.table.point_query(i)).abs();
            if z > cut && z > 0.0 {
                let a = z.powf(self.q) / self.weights.weight(i);
                total += a.max(floor);
            }
        }
        total
    }
}

impl LinearSketch for FqSketch {
    fn update(&mut self, u: Update) {
        self.add(u.index, u.delta as i128);
    }

    fn merge(&mut self, other: &Self) -> Result<()> {
        if self.q != other.q || self.params != other.params {
            return Err(SketchError::Incompatible("F_q sketches differ".into()));
        }
        self.table.merge(&other.table)
    }

    fn space(&self) -> SpaceReport {
        self.table
            .space()
            .combine(SpaceReport::new(0, self.weights.seed_bits(), 2 * REAL_WORD_BITS))
    }
}

impl NormEstimator for FqSketch {
    fn order(&self) -> f64 {
        self.q
    }

    /// Factor 2 on `‖x‖_q^q`, hence `2^{1/q}` on the norm.
    fn factor(&self) -> f64 {
        2f64.powf(1.0 / self.q)
    }

    fn success_prob(&self) -> f64 {
        2.0 / 3.0
    }

    fn update(&mut self, u: Update) {
        LinearSketch::update(self, u);
    }

    fn estimate_norm(&self) -> f64 {
        self.estimate_fq().powf(1.0 / self.q)
    }

    fn space(&self) -> SpaceReport {
        LinearSketch::space(self)
    }
}

/// `Z` with `‖x‖_q^q/2 ≤ Z ≤ 2‖x‖_q^q` with probability 2/3.
pub fn fq_precision_estimate(
    stream: &crate::stream::TurnstileStream,
    q: f64,
    seed: u64,
) -> Result<EstimateReport> {
    let mut sk = FqSketch::new(stream.n(), q, seed)?;
    sk.feed(stream);
    Ok(EstimateReport {
        value: sk.estimate_fq(),
        factor: 2.0,
        success_prob: 2.0 / 3.0,
        space: LinearSketch::space(&sk),
    })
}

/// Per-bucket ℓ_q sketch with a promised one-sided factor.
#[derive(Debug, Clone)]
enum BucketSketch {
    /// `ℓ₂` stands in for `ℓ_q` when `d^{1/2−1/q}` is within the budget.
    Ams(AmsSketch, f64),
    Fq(FqSketch, f64),
}

impl BucketSketch {
    fn add(&mut self, col: u64, value: i128) {
        match self {
            BucketSketch::Ams(a, _) => a.add(col, value),
            BucketSketch::Fq(f, _) => f.add(col, value),
        }
    }

    /// Estimate `Ẑ` with `‖v‖_q ≤ Ẑ` on the success event.
    fn upper_norm(&self) -> f64 {
        match self {
            BucketSketch::Ams(a, f) => a.estimate_f2().max(0.0).sqrt() * f,
            BucketSketch::Fq(s, f) => s.estimate_fq().powf(1.0 / s.q) * f,
        }
    }

    fn merge(&mut self, other: &Self) -> Result<()> {
        match (self, other) {
            (BucketSketch::Ams(a, _), BucketSketch::Ams(b, _)) => a.merge(b),
            (BucketSketch::Fq(a, _), BucketSketch::Fq(b, _)) => LinearSketch::merge(a, b),
            _ => Err(SketchError::Incompatible("bucket sketches differ".into())),
        }
    }

    fn space(&self) -> SpaceReport {
        match self {
            BucketSketch::Ams(a, _) => a.space(),
            BucketSketch::Fq(f, _) => LinearSketch::space(f),
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            BucketSketch::Ams(a, _) => a.counters().iter().all(|&c| c == 0),
            BucketSketch::Fq(f, _) => f.table().is_zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadedParams {
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    /// Independent row hashings.
    pub reps: usize,
    /// Multiplier on `β(p, q) = n^{1−2/p}·log₂² n` (`log₂² n` for `p ≤ 2`).
    pub bucket_constant: f64,
    /// Selection cut as a multiple of the median bucket mass.
    pub tau: f64,
}

impl CascadedParams {
    pub fn new(p: f64, q: f64, alpha: f64) -> Self {
        Self {
            p,
            q,
            alpha,
            reps: 5,
            bucket_constant: 1.0,
            tau: 4.0,
        }
    }

    pub fn buckets(&self, n: u64) -> usize {
        let nf = n.max(2) as f64;
        let growth = if self.p > 2.0 {
            nf.powf(1.0 - 2.0 / self.p)
        } else {
            1.0
        };
        (self.bucket_constant * growth * nf.log2().powi(2)).ceil().max(1.0) as usize
    }
}

/// Sketch of `‖X‖_{p,q}`: rows scaled by `w_r^{1/p}` are hashed into buckets,
/// each holding an `α/2`-approximate ℓ_q sketch of its aggregate.
#[derive(Debug, Clone)]
pub struct CascadedSketch {
    rows: u64,
    cols: u64,
    params: CascadedParams,
    buckets: usize,
    weights: PrecisionWeights,
    hashes: Vec<KWiseHash>,
    inner: Vec<BucketSketch>,
}

impl CascadedSketch {
    pub fn new(rows: u64, cols: u64, params: CascadedParams, seed: u64) -> Result<Self> {
        let CascadedParams { p, q, alpha, .. } = params;
        if !(p >= 1.0) || !(q > 2.0) {
            return Err(SketchError::invalid("cascaded norm needs p ≥ 1 and q > 2"));
        }
        if !(alpha >= 8.0) {
            return Err(SketchError::invalid(format!(
                "cascaded estimate needs alpha ≥ 8, got {alpha}"
            )));
        }
        if params.reps == 0 {
            return Err(SketchError::invalid("need at least one repetition"));
        }
        let buckets = params.buckets(rows);
        let weights = draw_weights(
            rows.max(4),
            0.25,
            1.0 / 3.0,
            derive_seed(seed, label("casc.weights"), 0),
        )?;
        let hashes = (0..params.reps as u64)
            .map(|l| {
                KWiseHash::new(
                    derive_seed(seed, label("casc.rowhash"), l),
                    2,
                    rows,
                    buckets as u64,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let inner_alpha = alpha / 2.0;
        let d = cols.max(2);
        let ceiling = (d as f64).powf(0.5 - 1.0 / q);
        let mut inner = Vec::with_capacity(params.reps * buckets);
        for j in 0..(params.reps * buckets) as u64 {
            let s = derive_seed(seed, label("casc.inner"), j);
            let sk = if inner_alpha >= ceiling {
                let eps = 0.5;
                BucketSketch::Ams(AmsSketch::new(cols, eps, s)?, (1.0f64 / (1.0 - eps)).sqrt())
            } else {
                let q_inner = derive_q(d, q, inner_alpha)?;
                if q_inner <= 2.0 + 1e-9 {
                    let eps = 0.5;
                    BucketSketch::Ams(AmsSketch::new(cols, eps, s)?, (1.0f64 / (1.0 - eps)).sqrt())
                } else {
                    let f = FqSketch::new(cols, q_inner, s)?;
                    let factor = NormEstimator::factor(&f);
                    BucketSketch::Fq(f, factor)
                }
            };
            inner.push(sk);
        }
        Ok(Self {
            rows,
            cols,
            params,
            buckets,
            weights,
            hashes,
            inner,
        })
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    /// Every bucket's counters, concatenated in bucket order.
    pub fn counters(&self) -> Vec<i128> {
        self.inner
            .iter()
            .flat_map(|b| match b {
                BucketSketch::Ams(a, _) => a.counters().to_vec(),
                BucketSketch::Fq(f, _) => f.table().counters().to_vec(),
            })
            .collect()
    }

    pub fn update_entry(&mut self, row: u64, col: u64, delta: i64) {
        assert!(row < self.rows && col < self.cols, "entry out of range");
        let c = fixed(self.weights.weight(row).powf(1.0 / self.params.p)) * delta as i128;
        for (l, h) in self.hashes.iter().enumerate() {
            let b = h.eval_unchecked(row) as usize;
            self.inner[l * self.buckets + b].add(col, c);
        }
    }

    pub fn feed_matrix(&mut self, a: &MatrixStream) {
        for &(r, c, d) in a.updates() {
            self.update_entry(r, c, d);
        }
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.params != other.params || (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(SketchError::Incompatible("cascaded sketches differ".into()));
        }
        for (a, b) in self.inner.iter_mut().zip(&other.inner) {
            a.merge(b)?;
        }
        Ok(())
    }

    /// Estimate `Z` with `‖X‖_{p,q} ≤ Z ≤ α‖X‖_{p,q}` with probability 2/3.
    pub fn estimate(&self) -> f64 {
        let p = self.params.p;
        if self.inner.iter().all(|b| b.is_zero()) {
            return 0.0;
        }
        let masses: Vec<f64> = self
            .inner
            .iter()
            .map(|b| unfixed(b.upper_norm()).powf(p))
            .collect();
        let cut = self.params.tau * median(&mut masses.clone());
        let floor = cut / self.weights.k();
        let mut total = 0.0;
        for r in 0..self.rows {
            let mut per_rep: Vec<f64> = self
                .hashes
                .iter()
                .enumerate()
                .map(|(l, h)| masses[l * self.buckets + h.eval_unchecked(r) as usize])
                .collect();
            let m = median(&mut per_rep);
            if m > cut && m > 0.0 {
                total += (m / self.weights.weight(r)).max(floor);
            }
        }
        // Inner sketches overestimate by at most α/2; centre the remaining
        // factor-2 slack geometrically.
        let centring = (self.params.alpha / (self.params.alpha / 2.0)).sqrt();
        total.powf(1.0 / p) * centring
    }

    pub fn space(&self) -> SpaceReport {
        let inner = self
            .inner
            .iter()
            .fold(SpaceReport::default(), |acc, b| acc.combine(b.space()));
        let hashes: u64 = self.hashes.iter().map(|h| h.seed_bits()).sum();
        inner.combine(SpaceReport::new(0, hashes + self.weights.seed_bits(), 0))
    }
}

/// One-sided `α`-approximation of `‖X‖_{p,q}` for `α ≥ 8`.
pub fn cascaded_estimate(
    a: &MatrixStream,
    p: f64,
    q: f64,
    alpha: f64,
    seed: u64,
) -> Result<EstimateReport> {
    let mut sk = CascadedSketch::new(a.rows(), a.cols(), CascadedParams::new(p, q, alpha), seed)?;
    sk.feed_matrix(a);
    Ok(EstimateReport {
        value: sk.estimate(),
        factor: alpha,
        success_prob: 2.0 / 3.0,
        space: sk.space(),
    })
}
