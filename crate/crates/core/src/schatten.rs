//! `α`-approximate Schatten-p norms from the bilinear Gaussian sketch
//! `G·A·Hᵀ`.
//!
//! `G` and `H` have i.i.d. `N(0, 1/r)` entries rounded to a `2^-20` grid,
//! so the accumulated sketch is an exact integer matrix and merges exactly.
//! The Schatten-q norm of the small sketch is computed from its singular
//! values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SketchError};
use crate::hashing::{derive_seed, label};
use crate::sketch::{EstimateReport, SpaceReport, REAL_WORD_BITS};
use crate::stream::{schatten_norm, singular_values, MatrixStream};

const GRID_BITS: i32 = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchattenPlan {
    pub n: u64,
    pub p: f64,
    pub alpha: f64,
    /// Even order evaluated on the sketch.
    pub q: u32,
    /// Target rank `(n^{1/2−1/p}/α)^{1/(1/2−1/q)}` before rounding.
    pub t: f64,
    pub r_g: usize,
    pub r_h: usize,
    pub gamma: f64,
}

fn is_even_integer(p: f64) -> bool {
    p.fract() == 0.0 && (p as u64) % 2 == 0
}

/// Plans the sketch with `γ = 1`; see [`calibrate_gamma`].
pub fn plan_schatten(n: u64, p: f64, alpha: f64) -> Result<SchattenPlan> {
    if n == 0 {
        return Err(SketchError::invalid("matrix dimension must be positive"));
    }
    if !(p >= 2.0) || !p.is_finite() {
        return Err(SketchError::invalid(format!("Schatten sketch needs p ≥ 2, got {p}")));
    }
    if !(alpha >= 1.0) {
        return Err(SketchError::invalid(format!("alpha must be at least 1, got {alpha}")));
    }
    let nf = n as f64;
    let even = is_even_integer(p);
    let q = if even {
        p as u32
    } else {
        2 * ((p / 2.0).ceil() as u32 - 1)
    };
    let qf = q as f64;
    if !even {
        let threshold = nf.powf(1.0 / qf - 1.0 / p);
        if alpha < threshold {
            return Err(SketchError::invalid(format!(
                "non-even p = {p} needs alpha ≥ n^(1/q-1/p) = {threshold:.4} with q = {q}, got {alpha}"
            )));
        }
    }
    let base = nf.powf(0.5 - 1.0 / p) / alpha;
    let exponent = 0.5 - 1.0 / qf;
    let t = if exponent > 0.0 {
        base.powf(1.0 / exponent)
    } else if base >= 1.0 - 1e-12 {
        nf
    } else {
        1.0
    };
    let t_int = t.ceil().clamp(1.0, nf);
    let r_g = (t_int * (nf / t_int + 2.0).log2().powi(2)).ceil().min(nf) as usize;
    let r_h = (8.0 * t_int).min(nf) as usize;
    Ok(SchattenPlan {
        n,
        p,
        alpha,
        q,
        t,
        r_g: r_g.max(1),
        r_h: r_h.max(1),
        gamma: 1.0,
    })
}

impl SchattenPlan {
    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    /// Sketch entries `r_G·r_H`.
    pub fn sketch_dimension(&self) -> usize {
        self.r_g * self.r_h
    }
}

/// `rows × cols` matrix of `N(0, 1/rows)` entries on the `2^-20` grid,
/// stored column by column as integers.
fn gaussian_columns(rows: usize, cols: u64, seed: u64) -> Vec<i64> {
    let sd = (1.0 / rows as f64).sqrt() * 2f64.powi(GRID_BITS);
    let mut out = Vec::with_capacity(rows * cols as usize);
    for c in 0..cols {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, label("gauss.col"), c));
        for _ in 0..rows {
            let z: f64 = StandardNormal.sample(&mut rng);
            out.push((z * sd).round() as i64);
        }
    }
    out
}

/// Real `rows × cols` matrix with `N(0, 1/rows)` entries.
pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let g = gaussian_columns(rows, cols as u64, seed);
    DMatrix::from_iterator(
        rows,
        cols,
        g.into_iter().map(|v| v as f64 / 2f64.powi(GRID_BITS)),
    )
}

#[derive(Debug, Clone)]
pub struct BilinearSketchState {
    rows: u64,
    cols: u64,
    r_g: usize,
    r_h: usize,
    seed: u64,
    g: Vec<i64>,
    h: Vec<i64>,
    /// Row-major `r_G × r_H` accumulator on the `2^-40` grid.
    s: Vec<i128>,
}

impl BilinearSketchState {
    pub fn new(plan: &SchattenPlan, rows: u64, cols: u64, seed: u64) -> Result<Self> {
        if rows.max(cols) > plan.n {
            return Err(SketchError::invalid(format!(
                "{rows}×{cols} matrix exceeds planned dimension {}",
                plan.n
            )));
        }
        Ok(Self {
            rows,
            cols,
            r_g: plan.r_g,
            r_h: plan.r_h,
            seed,
            g: gaussian_columns(plan.r_g, rows, derive_seed(seed, label("schatten.G"), 0)),
            h: gaussian_columns(plan.r_h, cols, derive_seed(seed, label("schatten.H"), 0)),
            s: vec![0; plan.r_g * plan.r_h],
        })
    }

    /// `S += Δ·g_row·h_colᵀ`.
    pub fn update(&mut self, row: u64, col: u64, delta: i64) {
        assert!(row < self.rows && col < self.cols, "entry ({row}, {col}) out of range");
        let g = &self.g[row as usize * self.r_g..(row as usize + 1) * self.r_g];
        let h = &self.h[col as usize * self.r_h..(col as usize + 1) * self.r_h];
        for (a, &gi) in g.iter().enumerate() {
            let scaled = gi as i128 * delta as i128;
            let out = &mut self.s[a * self.r_h..(a + 1) * self.r_h];
            for (o, &hj) in out.iter_mut().zip(h) {
                *o += scaled * hj as i128;
            }
        }
    }

    /// Adds `G·A·Hᵀ` for the accumulated `A`; equal to replaying every update.
    pub fn feed_matrix(&mut self, a: &MatrixStream) {
        let (rows, cols) = (self.rows as usize, self.cols as usize);
        let mut acc = vec![0i128; rows * cols];
        for &(r, c, d) in a.updates() {
            acc[r as usize * cols + c as usize] += d as i128;
        }
        // GA, r_G × cols.
        let mut ga = vec![0i128; self.r_g * cols];
        for r in 0..rows {
            let g = &self.g[r * self.r_g..(r + 1) * self.r_g];
            for c in 0..cols {
                let v = acc[r * cols + c];
                if v == 0 {
                    continue;
                }
                for (a, &gi) in g.iter().enumerate() {
                    ga[a * cols + c] += gi as i128 * v;
                }
            }
        }
        for a in 0..self.r_g {
            for c in 0..cols {
                let v = ga[a * cols + c];
                if v == 0 {
                    continue;
                }
                let h = &self.h[c * self.r_h..(c + 1) * self.r_h];
                let out = &mut self.s[a * self.r_h..(a + 1) * self.r_h];
                for (o, &hj) in out.iter_mut().zip(h) {
                    *o += v * hj as i128;
                }
            }
        }
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if (self.rows, self.cols, self.r_g, self.r_h, self.seed)
            != (other.rows, other.cols, other.r_g, other.r_h, other.seed)
        {
            return Err(SketchError::Incompatible("bilinear sketches differ".into()));
        }
        for (a, &b) in self.s.iter_mut().zip(&other.s) {
            *a += b;
        }
        Ok(())
    }

    pub fn raw(&self) -> &[i128] {
        &self.s
    }

    /// The sketch as a real `r_G × r_H` matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        let scale = 2f64.powi(2 * GRID_BITS);
        DMatrix::from_fn(self.r_g, self.r_h, |i, j| self.s[i * self.r_h + j] as f64 / scale)
    }

    /// Real `G` and `H` as used by the sketch.
    pub fn factors(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let scale = 2f64.powi(GRID_BITS);
        let g = DMatrix::from_fn(self.r_g, self.rows as usize, |i, j| {
            self.g[j * self.r_g + i] as f64 / scale
        });
        let h = DMatrix::from_fn(self.r_h, self.cols as usize, |i, j| {
            self.h[j * self.r_h + i] as f64 / scale
        });
        (g, h)
    }

    pub fn is_zero(&self) -> bool {
        self.s.iter().all(|&v| v == 0)
    }

    pub fn space(&self) -> SpaceReport {
        SpaceReport::new(self.s.len() as u64 * REAL_WORD_BITS, 2 * 64, 0)
    }
}

/// `Z = γ·‖S‖_q`.
pub fn schatten_alpha_estimate(st: &BilinearSketchState, plan: &SchattenPlan) -> f64 {
    if st.is_zero() {
        return 0.0;
    }
    plan.gamma * schatten_norm(&st.matrix(), plan.q as f64)
}

/// Sketches `a` and reports `Z` with the planned `α`.
pub fn schatten_estimate(a: &MatrixStream, plan: &SchattenPlan, seed: u64) -> Result<EstimateReport> {
    let mut st = BilinearSketchState::new(plan, a.rows(), a.cols(), seed)?;
    st.feed_matrix(a);
    Ok(EstimateReport {
        value: schatten_alpha_estimate(&st, plan),
        factor: plan.alpha,
        success_prob: 2.0 / 3.0,
        space: st.space(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub gamma: f64,
    /// Smallest `γ` meeting the lower edge on the calibration quantile.
    pub lower: f64,
    /// Largest `γ` keeping the upper edge within `α`.
    pub upper: f64,
    pub trials: usize,
}

fn quantile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let idx = ((values.len() - 1) as f64 * q).round() as usize;
    values[idx]
}

/// Fits `γ` on the two extremes of the sandwich: the identity (flat
/// spectrum) and `e₁e₁ᵀ` (a single singular value). Over `trials` seeded
/// sketches, `γ` must lift the 5% quantile of both ratios `‖S‖_q/‖A‖_p` to 1
/// and keep their 95% quantiles within `α`; the geometric midpoint of that
/// window is returned.
pub fn calibrate_gamma(plan: &SchattenPlan, trials: usize, seed: u64) -> Result<Calibration> {
    if trials == 0 {
        return Err(SketchError::invalid("calibration needs at least one trial"));
    }
    let n = plan.n;
    let identity = MatrixStream::from_dense(&DMatrix::<i64>::identity(n as usize, n as usize), 1);
    let mut spike = MatrixStream::new(n, n, 1);
    spike.push(0, 0, 1);
    let target_identity = (n as f64).powf(1.0 / plan.p);
    let unit = plan.clone().with_gamma(1.0);
    let mut flat = Vec::with_capacity(trials);
    let mut single = Vec::with_capacity(trials);
    for i in 0..trials as u64 {
        let s = derive_seed(seed, label("schatten.calibrate"), i);
        let mut st = BilinearSketchState::new(&unit, n, n, s)?;
        st.feed_matrix(&identity);
        flat.push(schatten_alpha_estimate(&st, &unit) / target_identity);
        let mut st = BilinearSketchState::new(&unit, n, n, s)?;
        st.feed_matrix(&spike);
        single.push(schatten_alpha_estimate(&st, &unit));
    }
    let lower = 1.0 / quantile(&mut flat.clone(), 0.05).min(quantile(&mut single.clone(), 0.05));
    let upper = plan.alpha / quantile(&mut flat, 0.95).max(quantile(&mut single, 0.95));
    if !(lower <= upper) {
        return Err(SketchError::Calibration(format!(
            "no feasible gamma for n = {n}, p = {}, alpha = {}, t = {:.3}: need gamma ≥ {lower:.4} \
             but gamma ≤ {upper:.4} (r_G = {}, r_H = {})",
            plan.p, plan.alpha, plan.t, plan.r_g, plan.r_h
        )));
    }
    Ok(Calibration {
        gamma: (lower * upper).sqrt(),
        lower,
        upper,
        trials,
    })
}

/// Key of a cached calibration.
#[derive(Debug, Clone, PartialEq, PartialOrd)]
pub struct CalibrationKey {
    pub n: u64,
    pub p: f64,
    pub alpha: f64,
    pub t: f64,
    pub seed: u64,
}

impl CalibrationKey {
    fn text(&self) -> String {
        format!("{} {} {} {} {:#x}", self.n, self.p, self.alpha, self.t, self.seed)
    }
}

/// Calibration cache, one entry per line:
///
/// ```text
/// # n p alpha t seed trials gamma lower upper
/// 128 4 2 8 0x1234 400 1.12 1.05 1.19
/// ```
///
/// Lines starting with `#` and blank lines are ignored.
#[derive(Debug, Clone, Default)]
pub struct GammaCache {
    entries: BTreeMap<String, Calibration>,
}

impl GammaCache {
    pub fn get(&self, key: &CalibrationKey) -> Option<&Calibration> {
        self.entries.get(&key.text())
    }

    pub fn insert(&mut self, key: &CalibrationKey, cal: Calibration) {
        self.entries.insert(key.text(), cal);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# n p alpha t seed trials gamma lower upper\n");
        for (k, c) in &self.entries {
            writeln!(out, "{k} {} {} {} {}", c.trials, c.gamma, c.lower, c.upper)
                .expect("writing to a String");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cache = Self::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = |m: &str| SketchError::Parse {
                line: no + 1,
                message: m.to_string(),
            };
            if f.len() != 9 {
                return Err(bad("expected 9 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
            let seed = u64::from_str_radix(f[4].trim_start_matches("0x"), 16)
                .map_err(|_| bad("bad seed"))?;
            let key = CalibrationKey {
                n: f[0].parse().map_err(|_| bad("bad n"))?,
                p: num(f[1])?,
                alpha: num(f[2])?,
                t: num(f[3])?,
                seed,
            };
            let cal = Calibration {
                trials: f[5].parse().map_err(|_| bad("bad trial count"))?,
                gamma: num(f[6])?,
                lower: num(f[7])?,
                upper: num(f[8])?,
            };
            cache.insert(&key, cal);
        }
        Ok(cache)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::default());
        }
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Cached calibration for `plan`, computing and storing it if absent.
    pub fn calibrated(&mut self, plan: &SchattenPlan, trials: usize, seed: u64) -> Result<SchattenPlan> {
        let key = CalibrationKey {
            n: plan.n,
            p: plan.p,
            alpha: plan.alpha,
            t: plan.t,
            seed,
        };
        let cal = match self.get(&key) {
            Some(c) => c.clone(),
            None => {
                let c = calibrate_gamma(plan, trials, seed)?;
                self.insert(&key, c.clone());
                c
            }
        };
        Ok(plan.clone().with_gamma(cal.gamma))
    }
}

/// Whether every singular value of `A` survives in `G·A` within `(1 ± ε)`.
pub fn subspace_embed_check(g: &DMatrix<f64>, a: &DMatrix<f64>, eps: f64) -> bool {
    let sa = singular_values(a);
    let sga = singular_values(&(g * a));
    sa.iter().enumerate().all(|(i, &s)| {
        let t = sga.get(i).copied().unwrap_or(0.0);
        (1.0 - eps) * s <= t + 1e-12 && t <= (1.0 + eps) * s + 1e-12
    })
}
