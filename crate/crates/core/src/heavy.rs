//! CountSketch point queries and (1/k, α)-heavy set extraction.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SketchError};
use crate::hashing::{derive_seed, label, KWiseHash, SignFamily};
use crate::lp::AmsSketch;
use crate::sketch::{median, LinearSketch, SpaceReport};
use crate::stream::Update;

/// `R × W` table of signed counters; row `r` adds `s_r(i)·Δ` to
/// bucket `h_r(i)`.
#[derive(Debug, Clone)]
pub struct CountSketchTable {
    n: u64,
    rows: usize,
    width: usize,
    seed: u64,
    buckets: Vec<KWiseHash>,
    signs: Vec<SignFamily>,
    counters: Vec<i128>,
}

impl CountSketchTable {
    pub fn new(n: u64, rows: usize, width: usize, seed: u64) -> Result<Self> {
        if rows == 0 || width == 0 {
            return Err(SketchError::invalid("CountSketch needs rows and columns"));
        }
        let buckets = (0..rows as u64)
            .map(|r| KWiseHash::new(derive_seed(seed, label("cs.bucket"), r), 2, n, width as u64))
            .collect::<Result<Vec<_>>>()?;
        let signs = (0..rows as u64)
            .map(|r| SignFamily::new(derive_seed(seed, label("cs.sign"), r), n))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n,
            rows,
            width,
            seed,
            buckets,
            signs,
            counters: vec![0; rows * width],
        })
    }

    /// `R = ⌈4 log₂ n⌉` rows and `W = 8k` columns.
    pub fn for_heavy(n: u64, k: u64, seed: u64) -> Result<Self> {
        let rows = (4.0 * (n.max(2) as f64).log2()).ceil() as usize;
        Self::new(n, rows, (8 * k.max(1)) as usize, seed)
    }

    pub fn dimension(&self) -> u64 {
        self.n
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn counters(&self) -> &[i128] {
        &self.counters
    }

    /// Adds `value` at coordinate `index` in every row.
    pub fn add(&mut self, index: u64, value: i128) {
        assert!(index < self.n, "index {index} out of range");
        for r in 0..self.rows {
            let b = self.buckets[r].eval_unchecked(index) as usize;
            let s = self.signs[r].sign(index) as i128;
            self.counters[r * self.width + b] += s * value;
        }
    }

    /// Per-row estimates `s_r(i)·C[r][h_r(i)]`.
    pub fn row_estimates(&self, index: u64) -> Vec<f64> {
        (0..self.rows)
            .map(|r| {
                let b = self.buckets[r].eval_unchecked(index) as usize;
                (self.signs[r].sign(index) as i128 * self.counters[r * self.width + b]) as f64
            })
            .collect()
    }

    /// Median over rows of the per-row estimates.
    pub fn point_query(&self, index: u64) -> f64 {
        median(&mut self.row_estimates(index))
    }

    /// Median over rows of `Σ_b C[r][b]²`, an estimate of `‖x‖₂²`.
    pub fn f2_estimate(&self) -> f64 {
        let mut per_row: Vec<f64> = self
            .counters
            .chunks(self.width)
            .map(|row| row.iter().map(|&c| (c as f64) * (c as f64)).sum())
            .collect();
        median(&mut per_row)
    }

    /// Median absolute counter, a robust scale of the light mass per bucket.
    pub fn median_abs_counter(&self) -> f64 {
        let mut abs: Vec<f64> = self.counters.iter().map(|&c| (c as f64).abs()).collect();
        median(&mut abs)
    }

    pub fn is_zero(&self) -> bool {
        self.counters.iter().all(|&c| c == 0)
    }

    fn word_bits(&self) -> u64 {
        64
    }
}

impl LinearSketch for CountSketchTable {
    fn update(&mut self, u: Update) {
        self.add(u.index, u.delta as i128);
    }

    fn merge(&mut self, other: &Self) -> Result<()> {
        if (self.n, self.rows, self.width, self.seed)
            != (other.n, other.rows, other.width, other.seed)
        {
            return Err(SketchError::Incompatible(
                "CountSketch tables differ in shape or seed".into(),
            ));
        }
        for (a, &b) in self.counters.iter_mut().zip(&other.counters) {
            *a += b;
        }
        Ok(())
    }

    fn space(&self) -> SpaceReport {
        let seed_bits = self
            .buckets
            .iter()
            .map(|h| h.seed_bits())
            .chain(self.signs.iter().map(|s| s.seed_bits()))
            .sum();
        SpaceReport::new(self.counters.len() as u64 * self.word_bits(), seed_bits, 0)
    }
}

/// Extracted heavy set with the thresholds that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeavyReport {
    /// Indices with `query(i)² ≥ θ·F̂₂/k`, increasing.
    pub set: Vec<u64>,
    /// Indices whose estimate falls between `F̂₂/(αk)` and `F̂₂/k`; either
    /// answer is acceptable for them.
    pub either: Vec<u64>,
    pub k: u64,
    pub alpha: f64,
    pub theta: f64,
    pub f2_estimate: f64,
}

/// `{i : query(i)² ≥ θ·F̂₂/k}` with `θ = 1/√α`.
pub fn extract_heavy(
    table: &CountSketchTable,
    k: u64,
    alpha: f64,
    f2_estimate: f64,
) -> Result<HeavyReport> {
    extract_heavy_with_theta(table, k, alpha, f2_estimate, 1.0 / alpha.sqrt())
}

pub fn extract_heavy_with_theta(
    table: &CountSketchTable,
    k: u64,
    alpha: f64,
    f2_estimate: f64,
    theta: f64,
) -> Result<HeavyReport> {
    if k == 0 || !(alpha >= 1.0) {
        return Err(SketchError::invalid("need k ≥ 1 and alpha ≥ 1"));
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(SketchError::invalid("theta must lie in (0, 1]"));
    }
    let mut report = HeavyReport {
        set: Vec::new(),
        either: Vec::new(),
        k,
        alpha,
        theta,
        f2_estimate,
    };
    if table.is_zero() {
        return Ok(report);
    }
    if !(f2_estimate > 0.0) {
        return Err(SketchError::ZeroNormEstimate);
    }
    let unit = f2_estimate / k as f64;
    for i in 0..table.dimension() {
        let q = table.point_query(i);
        let e = q * q;
        if e >= theta * unit {
            report.set.push(i);
        }
        if e >= unit / alpha && e < unit {
            report.either.push(i);
        }
    }
    Ok(report)
}

/// CountSketch table plus an AMS sketch supplying `F̂₂`.
#[derive(Debug, Clone)]
pub struct HeavyHitters {
    pub table: CountSketchTable,
    pub ams: AmsSketch,
    k: u64,
    alpha: f64,
}

impl HeavyHitters {
    /// AMS runs at accuracy `min(1/2, (1 − 1/√α)/2)` so the threshold
    /// margin absorbs its error.
    pub fn new(n: u64, k: u64, alpha: f64, seed: u64) -> Result<Self> {
        let eps = ((1.0 - 1.0 / alpha.max(1.0).sqrt()) / 2.0).clamp(0.05, 0.5);
        Ok(Self {
            table: CountSketchTable::for_heavy(n, k, derive_seed(seed, label("hh.table"), 0))?,
            ams: AmsSketch::new(n, eps, derive_seed(seed, label("hh.ams"), 0))?,
            k,
            alpha,
        })
    }

    pub fn report(&self) -> Result<HeavyReport> {
        extract_heavy(&self.table, self.k, self.alpha, self.ams.estimate_f2())
    }
}

impl LinearSketch for HeavyHitters {
    fn update(&mut self, u: Update) {
        self.table.update(u);
        self.ams.update(u);
    }

    fn merge(&mut self, other: &Self) -> Result<()> {
        self.table.merge(&other.table)?;
        self.ams.merge(&other.ams)
    }

    fn space(&self) -> SpaceReport {
        self.table.space().combine(self.ams.space())
    }
}
