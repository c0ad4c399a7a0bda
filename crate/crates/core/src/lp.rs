//! ℓ_p estimation for `0 < p ≤ 2`.
//!
//! [`PStableSketch`] keeps `y = Ax` for a matrix of p-stable entries generated
//! on demand from limited-independence hashes and quantized to a grid, so the
//! state is an exact integer vector. [`AmsSketch`] handles `p = 2` with 4-wise
//! random signs. [`fp_twopass_estimate`] subsamples coordinates in a second
//! pass once a constant-factor estimate is known.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SketchError};
use crate::hashing::{derive_seed, label, KWiseHash, SignFamily, FIELD_PRIME};
use crate::sketch::{median, EstimateReport, LinearSketch, SpaceReport, REAL_WORD_BITS};
use crate::stream::{compensated_sum, FrequencyVector, Update, UpdateSource};

/// `ln |X|` for the p-stable draw `X = f(θ, t)` below.
pub fn ln_abs_p_stable(p: f64, theta: f64, t: f64) -> f64 {
    let a = (p * theta).sin().abs().ln();
    let b = theta.cos().ln() / p;
    let c = ((1.0 - p) * theta).cos().ln() - (-t.ln()).ln();
    a - b + c * (1.0 - p) / p
}

/// One p-stable draw from `θ ∈ (−π/2, π/2)` and `t ∈ (0, 1)`:
/// `sin(pθ)/cos^{1/p}(θ) · (cos(θ(1−p))/ln(1/t))^{(1−p)/p}`.
pub fn gen_p_stable(p: f64, theta: f64, t: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 2.0) {
        return Err(SketchError::invalid(format!("p = {p} outside (0, 2]")));
    }
    if !(theta.abs() < PI / 2.0) || !(t > 0.0 && t < 1.0) {
        return Err(SketchError::invalid("theta or t on the boundary; resample"));
    }
    if p == 1.0 {
        return Ok(theta.tan());
    }
    let head = (p * theta).sin() / theta.cos().powf(1.0 / p);
    let tail = (((1.0 - p) * theta).cos() / (1.0 / t).ln()).powf((1.0 - p) / p);
    Ok(head * tail)
}

/// Field element mapped strictly inside `(0, 1)`.
fn open_unit(v: u64) -> f64 {
    (v as f64 + 0.5) / FIELD_PRIME as f64
}

const MEDIAN_TABLE: &str = include_str!("../data/pstable_medians.txt");

fn median_table() -> &'static [(f64, f64)] {
    static TABLE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    TABLE.get_or_init(|| {
        MEDIAN_TABLE
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
            .map(|l| {
                let mut it = l.split_whitespace();
                let p: f64 = it.next().and_then(|s| s.parse().ok()).expect("table p");
                let m: f64 = it.next().and_then(|s| s.parse().ok()).expect("table median");
                (p, m)
            })
            .collect()
    })
}

/// Median of `|X|` for `X ∼ D_p`, interpolated from the shipped table.
pub fn median_abs_p_stable(p: f64) -> Result<f64> {
    let table = median_table();
    let (lo, hi) = (table[0].0, table[table.len() - 1].0);
    if !(p >= lo - 1e-12 && p <= hi + 1e-12) {
        return Err(SketchError::invalid(format!(
            "p = {p} outside the median table range [{lo}, {hi}]"
        )));
    }
    let i = table.partition_point(|&(q, _)| q < p - 1e-12);
    if i < table.len() && (table[i].0 - p).abs() < 1e-12 {
        return Ok(table[i].1);
    }
    let (p0, m0) = table[i - 1];
    let (p1, m1) = table[i];
    let w = (p - p0) / (p1 - p0);
    Ok((m0.ln() * (1.0 - w) + m1.ln() * w).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PStableParams {
    pub rows: usize,
    /// Independence of the entries within a row.
    pub independence: usize,
    /// Quantization step of the matrix entries.
    pub delta: f64,
    /// Entries are clamped to `[−clamp, clamp]` before quantization.
    pub clamp: f64,
}

impl PStableParams {
    /// `r = ⌈36/ε²⌉`, `k = min(32, ⌈ε^{−p}⌉)`, grid `ε/(nM)` and a clamp
    /// exceeded by any of the `n·r` entries with probability about 1/10.
    pub fn for_accuracy(p: f64, eps: f64, n: u64, m_bound: u64) -> Self {
        let rows = (36.0 / (eps * eps)).ceil() as usize;
        Self::for_support(p, eps, n, m_bound, rows)
    }

    /// Coarser grid `(ε/M)²` for a sketch that sees about `support` coordinates.
    pub fn coarse(p: f64, eps: f64, support: u64, m_bound: u64) -> Self {
        let rows = (36.0 / (eps * eps)).ceil() as usize;
        let m = m_bound.max(1) as f64;
        Self {
            delta: (eps / m).powi(2),
            ..Self::for_support(p, eps, support, m_bound, rows)
        }
    }

    fn for_support(p: f64, eps: f64, n: u64, m_bound: u64, rows: usize) -> Self {
        let k = (eps.powf(-p).ceil() as usize).clamp(2, 32);
        let m = m_bound.max(1) as f64;
        Self {
            rows,
            independence: k,
            delta: eps / (n.max(1) as f64 * m),
            clamp: (10.0 * n.max(1) as f64 * rows as f64).powf(1.0 / p),
        }
    }
}

/// Linear sketch `y = Ax` with p-stable `A`, stored on an integer grid.
#[derive(Debug, Clone)]
pub struct PStableSketch {
    n: u64,
    m_bound: u64,
    p: f64,
    params: PStableParams,
    seed: u64,
    quant_max: f64,
    median_dp: f64,
    /// Both hashes run over the flattened index `row·n + col`.
    theta: KWiseHash,
    tuni: KWiseHash,
    y: Vec<i128>,
}

impl PStableSketch {
    pub fn new(n: u64, m_bound: u64, p: f64, eps: f64, seed: u64) -> Result<Self> {
        Self::with_params(
            n,
            m_bound,
            p,
            PStableParams::for_accuracy(p, eps, n, m_bound),
            seed,
        )
    }

    pub fn with_params(
        n: u64,
        m_bound: u64,
        p: f64,
        params: PStableParams,
        seed: u64,
    ) -> Result<Self> {
        if !(p > 0.0 && p < 2.0) {
            return Err(SketchError::invalid(format!(
                "p-stable sketch needs p in (0, 2), got {p}"
            )));
        }
        if params.rows == 0 || !(params.delta > 0.0) || !(params.clamp > 0.0) {
            return Err(SketchError::invalid("rows, delta and clamp must be positive"));
        }
        let median_dp = median_abs_p_stable(p)?;
        let k = params.independence.max(2);
        let cells = (params.rows as u64)
            .checked_mul(n.max(1))
            .filter(|&c| c < FIELD_PRIME)
            .ok_or_else(|| SketchError::invalid("rows·n exceeds the hash field"))?;
        let theta = KWiseHash::new(derive_seed(seed, label("pstable.theta"), 0), k, cells, FIELD_PRIME)?;
        let tuni = KWiseHash::new(derive_seed(seed, label("pstable.t"), 0), k, cells, FIELD_PRIME)?;
        // Keeps |Σ q·Δ| far below i128::MAX for any stream respecting ‖x‖∞ ≤ M.
        let budget = 2f64.powi(100) / (n.max(1) as f64 * m_bound.max(1) as f64);
        let quant_max = (params.clamp / params.delta).min(budget).floor();
        let rows = params.rows;
        Ok(Self {
            n,
            m_bound,
            p,
            params,
            seed,
            quant_max,
            median_dp,
            theta,
            tuni,
            y: vec![0; rows],
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn rows(&self) -> usize {
        self.params.rows
    }

    pub fn params(&self) -> &PStableParams {
        &self.params
    }

    /// Unquantized entry `A[row][col]`.
    pub fn raw_entry(&self, row: usize, col: u64) -> f64 {
        let cell = row as u64 * self.n.max(1) + col;
        let theta = PI * (open_unit(self.theta.eval_unchecked(cell)) - 0.5);
        let t = open_unit(self.tuni.eval_unchecked(cell));
        gen_p_stable(self.p, theta, t).expect("interior arguments")
    }

    /// Entry on the quantization grid, as a multiple of `delta`.
    pub fn grid_entry(&self, row: usize, col: u64) -> i128 {
        let x = self.raw_entry(row, col).clamp(-self.params.clamp, self.params.clamp);
        ((x / self.params.delta).round().clamp(-self.quant_max, self.quant_max)) as i128
    }

    /// Projections `y` in real units.
    pub fn projections(&self) -> Vec<f64> {
        self.y
            .iter()
            .map(|&v| v as f64 * self.params.delta)
            .collect()
    }

    /// Projections of a dense vector, computed without the sketch state.
    pub fn dense_projections(&self, x: &FrequencyVector, quantized: bool) -> Vec<f64> {
        (0..self.params.rows)
            .map(|row| {
                compensated_sum(x.entries().iter().enumerate().filter(|(_, &v)| v != 0).map(
                    |(j, &v)| {
                        let a = if quantized {
                            self.grid_entry(row, j as u64) as f64 * self.params.delta
                        } else {
                            self.raw_entry(row, j as u64)
                        };
                        a * v as f64
                    },
                ))
            })
            .collect()
    }

    /// `median|y_i| / median|D_p|` for any projection vector.
    pub fn estimate_from(&self, projections: &[f64]) -> f64 {
        let mut abs: Vec<f64> = projections.iter().map(|v| v.abs()).collect();
        median(&mut abs) / self.median_dp
    }

    /// Estimate of `‖x‖_p`.
    pub fn estimate(&self) -> f64 {
        self.estimate_from(&self.projections())
    }

    pub fn report(&self, eps: f64) -> EstimateReport {
        EstimateReport {
            value: self.estimate(),
            factor: 1.0 + eps,
            success_prob: 0.9,
            space: self.space(),
        }
    }

    fn word_bits(&self) -> u64 {
        let peak = self.quant_max * self.n.max(1) as f64 * self.m_bound.max(1) as f64;
        (peak.log2().ceil() as u64 + 1).min(128)
    }
}

impl LinearSketch for PStableSketch {
    fn update(&mut self, u: Update) {
        assert!(u.index < self.n, "index {} out of range", u.index);
        if u.delta == 0 {
            return;
        }
        let d = u.delta as i128;
        for row in 0..self.params.rows {
            let q = self.grid_entry(row, u.index);
            self.y[row] = self.y[row].wrapping_add(q.wrapping_mul(d));
        }
    }

    fn merge(&mut self, other: &Self) -> Result<()> {
        if self.n != other.n
            || self.p != other.p
            || self.params != other.params
            || self.seed != other.seed
        {
            return Err(SketchError::Incompatible(
                "p-stable sketches differ in parameters or seed".into(),
            ));
        }
        for (a, &b) in self.y.iter_mut().zip(&other.y) {
            *a = a.wrapping_add(b);
        }
        Ok(())
    }

    fn space(&self) -> SpaceReport {
        let seed_bits = self.theta.seed_bits() + self.tuni.seed_bits();
        SpaceReport::new(
            self.params.rows as u64 * self.word_bits(),
            seed_bits,
            2 * REAL_WORD_BITS,
        )
    }
}

/// Median-of-means sign sketch for `F₂`.
#[derive(Debug, Clone)]
pub struct AmsSketch {
    n: u64,
    groups: usize,
    per_group: usize,
    seed: u64,
    signs: Vec<SignFamily>,
    y: Vec<i128>,
}

impl AmsSketch {
    /// Five groups of `⌈6/ε²⌉` counters.
    pub fn new(n: u64, eps: f64, seed: u64) -> Result<Self> {
        Self::with_shape(n, 5, (6.0 / (eps * eps)).ceil() as usize, seed)
    }

    pub fn with_shape(n: u64, groups: usize, per_group: usize, seed: u64) -> Result<Self> {
        if groups == 0 || per_group == 0 {
            return Err(SketchError::invalid("AMS sketch needs at least one counter"));
        }
        let signs = (0..groups * per_group)
            .map(|j| SignFamily::new(derive_seed(seed, label("ams.sign"), j as u64), n))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n,
            groups,
            per_group,
            seed,
            signs,
            y: vec![0; groups * per_group],
        })
    }

    pub fn counters(&self) -> &[i128] {
        &self.y
    }

    /// Adds `value` at coordinate `index`.
    pub fn add(&mut self, index: u64, value: i128) {
        assert!(index < self.n, "index {index} out of range");
        for (y, s) in self.y.iter_mut().zip(&self.signs) {
            *y += value * s.sign(index) as i128;
        }
    }

    /// Median over groups of the mean of squared counters.
    pub fn estimate_f2(&self) -> f64 {
        let mut means: Vec<f64> = self
            .y
            .chunks(self.per_group)
            .map(|c| compensated_sum(c.iter().map(|&v| (v as f64) * (v as f64))) / c.len() as f64)
            .collect();
        median(&mut means)
    }

    pub fn report(&self, eps: f64) -> EstimateReport {
        EstimateReport {
            value: self.estimate_f2(),
            factor: 1.0 + eps,
            success_prob: 0.9,
            space: self.space(),
        }
    }
}

impl LinearSketch for AmsSketch {
    fn update(&mut self, u: Update) {
        self.add(u.index, u.delta as i128);
    }

    fn merge(&mut self, other: &Self) -> Result<()> {
        if (self.n, self.groups, self.per_group, self.seed)
            != (other.n, other.groups, other.per_group, other.seed)
        {
            return Err(SketchError::Incompatible(
                "AMS sketches differ in shape or seed".into(),
            ));
        }
        for (a, &b) in self.y.iter_mut().zip(&other.y) {
            *a += b;
        }
        Ok(())
    }

    fn space(&self) -> SpaceReport {
        SpaceReport::new(
            self.y.len() as u64 * REAL_WORD_BITS,
            self.signs.iter().map(|s| s.seed_bits()).sum(),
            0,
        )
    }
}

/// Pairwise-independent Bernoulli(`q`) coordinate sampler.
#[derive(Debug, Clone)]
pub struct PairwiseSampler {
    hash: KWiseHash,
    qprob: f64,
    cut: u64,
}

impl PairwiseSampler {
    pub fn new(n: u64, qprob: f64, seed: u64) -> Result<Self> {
        if !(qprob > 0.0 && qprob <= 1.0) {
            return Err(SketchError::invalid(format!("qprob = {qprob} outside (0, 1]")));
        }
        let hash = KWiseHash::new(seed, 2, n, FIELD_PRIME)?;
        let cut = (qprob * FIELD_PRIME as f64).round() as u64;
        Ok(Self { hash, qprob, cut })
    }

    pub fn qprob(&self) -> f64 {
        self.qprob
    }

    pub fn sampled(&self, i: u64) -> bool {
        self.qprob >= 1.0 || self.hash.eval_unchecked(i) < self.cut
    }

    pub fn seed_bits(&self) -> u64 {
        self.hash.seed_bits()
    }
}

/// `(1/q)·Σ_{i sampled} |x_i|^p`.
pub fn uniform_sample_fp(x: &FrequencyVector, qprob: f64, p: f64, seed: u64) -> Result<f64> {
    let sampler = PairwiseSampler::new(x.len() as u64, qprob, seed)?;
    let total = compensated_sum(
        x.entries()
            .iter()
            .enumerate()
            .filter(|(i, &v)| v != 0 && sampler.sampled(*i as u64))
            .map(|(_, &v)| (v.unsigned_abs() as f64).powf(p)),
    );
    Ok(total / qprob)
}

/// Sketch of `‖x_S‖_p^p` for a pairwise-sampled coordinate set `S`.
#[derive(Debug, Clone)]
pub struct SampledFpSketch {
    p: f64,
    first_pass: f64,
    sampler: PairwiseSampler,
    inner: FpInner,
}

#[derive(Debug, Clone)]
enum FpInner {
    Stable(PStableSketch),
    Ams(AmsSketch),
}

impl SampledFpSketch {
    pub fn sampler(&self) -> &PairwiseSampler {
        &self.sampler
    }

    pub fn first_pass(&self) -> f64 {
        self.first_pass
    }

    /// Estimate of `‖x‖_p^p`.
    pub fn estimate(&self) -> f64 {
        let inner = match &self.inner {
            FpInner::Stable(s) => s.estimate().powf(self.p),
            FpInner::Ams(a) => a.estimate_f2(),
        };
        inner / self.sampler.qprob()
    }
}

impl LinearSketch for SampledFpSketch {
    fn update(&mut self, u: Update) {
        if !self.sampler.sampled(u.index) {
            return;
        }
        match &mut self.inner {
            FpInner::Stable(s) => s.update(u),
            FpInner::Ams(a) => a.update(u),
        }
    }

    fn merge(&mut self, other: &Self) -> Result<()> {
        if self.sampler.qprob() != other.sampler.qprob()
            || self.sampler.hash.seed() != other.sampler.hash.seed()
        {
            return Err(SketchError::Incompatible("samplers differ".into()));
        }
        match (&mut self.inner, &other.inner) {
            (FpInner::Stable(a), FpInner::Stable(b)) => a.merge(b),
            (FpInner::Ams(a), FpInner::Ams(b)) => a.merge(b),
            _ => Err(SketchError::Incompatible("inner sketches differ".into())),
        }
    }

    fn space(&self) -> SpaceReport {
        let inner = match &self.inner {
            FpInner::Stable(s) => s.space(),
            FpInner::Ams(a) => a.space(),
        };
        inner.combine(SpaceReport::new(0, self.sampler.seed_bits(), 2 * REAL_WORD_BITS))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FpTwoPassConfig {
    pub p: f64,
    pub eps: f64,
    /// Constant in `qprob = min(1, C·ε⁻²·M^p/Z)`.
    pub sample_constant: f64,
    /// Accuracy of the pass-one estimate.
    pub first_eps: f64,
}

impl Default for FpTwoPassConfig {
    fn default() -> Self {
        Self {
            p: 1.0,
            eps: 0.1,
            sample_constant: 4.0,
            first_eps: 1.0 / 3.0,
        }
    }
}

/// Result of [`fp_twopass_estimate`] with the pass-two sketch for inspection.
#[derive(Debug, Clone)]
pub struct FpTwoPass {
    pub report: EstimateReport,
    pub qprob: f64,
    pub sketch: SampledFpSketch,
}

/// One-pass `(1 ± ε)` estimate of `‖x‖_p^p` (AMS for `p = 2`).
pub fn fp_onepass_estimate(
    source: &mut dyn UpdateSource,
    p: f64,
    eps: f64,
    seed: u64,
) -> Result<EstimateReport> {
    let n = source.dimension();
    if p == 2.0 {
        let mut a = AmsSketch::new(n, eps, seed)?;
        for u in source.pass(0)? {
            a.update(u);
        }
        return Ok(a.report(eps));
    }
    let mut s = PStableSketch::new(n, source.magnitude_bound(), p, eps, seed)?;
    for u in source.pass(0)? {
        s.update(u);
    }
    let mut r = s.report(eps);
    r.value = r.value.powf(p);
    Ok(r)
}

/// Two-pass `(1 ± ε)` estimate of `‖x‖_p^p`: a constant-factor estimate `Z`
/// from pass one fixes the sampling rate of pass two.
pub fn fp_twopass_estimate(
    source: &mut dyn UpdateSource,
    cfg: &FpTwoPassConfig,
    master_seed: u64,
) -> Result<FpTwoPass> {
    let (p, eps) = (cfg.p, cfg.eps);
    if !(p > 0.0 && p <= 2.0) || !(eps > 0.0 && eps < 1.0) {
        return Err(SketchError::invalid("need p in (0, 2] and eps in (0, 1)"));
    }
    let n = source.dimension();
    let m_bound = source.magnitude_bound().max(1);
    let first = fp_onepass_estimate(
        source,
        p,
        cfg.first_eps,
        derive_seed(master_seed, label("fp2.first"), 0),
    )?;
    let z = first.value / (1.0 + cfg.first_eps);
    let mp = (m_bound as f64).powf(p);
    let qprob = if z > 0.0 {
        (cfg.sample_constant * mp / (eps * eps * z)).min(1.0)
    } else {
        1.0
    };
    let sampler = PairwiseSampler::new(n, qprob, derive_seed(master_seed, label("fp2.sample"), 0))?;
    let inner_seed = derive_seed(master_seed, label("fp2.inner"), 0);
    let inner = if p == 2.0 {
        FpInner::Ams(AmsSketch::new(n, eps, inner_seed)?)
    } else {
        let support = if qprob < 1.0 {
            (2.0 * cfg.sample_constant * mp / (eps * eps)).ceil() as u64 + 1
        } else {
            n
        };
        FpInner::Stable(PStableSketch::with_params(
            n,
            m_bound,
            p,
            PStableParams::coarse(p, eps, support.min(n), m_bound),
            inner_seed,
        )?)
    };
    let mut sketch = SampledFpSketch {
        p,
        first_pass: z,
        sampler,
        inner,
    };
    for u in source.pass(1)? {
        sketch.update(u);
    }
    let space = first.space.combine(sketch.space());
    Ok(FpTwoPass {
        report: EstimateReport {
            value: sketch.estimate(),
            factor: 1.0 + eps,
            success_prob: 0.9,
            space,
        },
        qprob,
        sketch,
    })
}
