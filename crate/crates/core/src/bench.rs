//! Seeded experiment runner: draws inputs, runs an estimator, compares with
//! the exact value and tallies space.
//!
//! CSV columns: `trial,seed,exact,estimate,ratio,success,counter_bits,seed_bits,total_bits`.
//! `ratio` is left empty when the exact value is zero.

use std::fmt::Write as _;
use std::path::PathBuf;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascaded::{cascaded_estimate, fq_precision_estimate};
use crate::error::{Result, SketchError};
use crate::hard::{gen_augdisj, gen_coin_stream, gen_pw11, CoinMode, CoinStreamSpec};
use crate::hashing::{derive_seed, label};
use crate::heavy::HeavyHitters;
use crate::l0::{
    threepass_estimate, twopass_estimate, L0Profile, RoughL0Sketch, RoughParams, ThreePassConfig,
    TwoPassConfig,
};
use crate::lp::{fp_onepass_estimate, fp_twopass_estimate, FpTwoPassConfig, PStableSketch};
use crate::lp_large::{lp_large_estimate, InnerKind, LargePPlan};
use crate::schatten::{calibrate_gamma, plan_schatten, schatten_estimate};
use crate::sketch::{LinearSketch, SpaceReport};
use crate::stream::{
    accumulate, exact_cascaded, exact_fp, exact_heavy_set, exact_moment, exact_schatten,
    FrequencyVector, MatrixStream, TurnstileStream, Update,
};

pub const CSV_HEADER: &str =
    "trial,seed,exact,estimate,ratio,success,counter_bits,seed_bits,total_bits";

pub const ESTIMATORS: &[&str] = &[
    "l0-rough",
    "l0-twopass",
    "l0-threepass",
    "pstable",
    "ams",
    "fp-twopass",
    "lp-large",
    "fq",
    "heavy",
    "schatten",
    "cascaded",
];

/// Estimator parameters; unset fields take per-estimator defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorParams {
    pub t: Option<usize>,
    pub profile: Option<L0Profile>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub eps: Option<f64>,
    pub alpha: Option<f64>,
    pub k: Option<u64>,
    pub inner: Option<InnerKind>,
    /// Trials used to calibrate the Schatten scale.
    pub calibration_trials: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SourceSpec {
    /// Stream in the text format, identical for every trial.
    File { path: PathBuf },
    /// `l0` random coordinates set to values in `±[1, m]`, plus `churn`
    /// insert/delete pairs, in random order.
    Planted {
        n: u64,
        l0: u64,
        m: u64,
        #[serde(default)]
        churn: u64,
    },
    /// Every coordinate uniform in `[−m, m]`.
    Random { n: u64, m: u64 },
    /// `k/4` heavy coordinates of squared size `2‖x‖₂²/k` over rounded
    /// `N(0, m²)` noise.
    PlantedHeavy { n: u64, k: u64, m: u64 },
    /// Quantized signal-plus-noise instance on `2^bits` grid.
    Pw11 {
        n: usize,
        k: usize,
        #[serde(default = "default_pw11_bits")]
        bits: i32,
    },
    Coin {
        len: u64,
        beta: f64,
        #[serde(default = "default_coin_mode")]
        mode: CoinMode,
    },
    Augdisj { n: usize, s: usize, r: usize },
    MatrixFile { path: PathBuf },
    MatrixRandom { rows: u64, cols: u64, m: u64 },
    MatrixIdentity { n: u64 },
    /// `uvᵀ` with `u, v` uniform in `[−m, m]`.
    MatrixRankOne { n: u64, m: u64 },
}

fn default_pw11_bits() -> i32 {
    10
}

fn default_coin_mode() -> CoinMode {
    CoinMode::Plain
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub estimator: String,
    #[serde(default)]
    pub params: EstimatorParams,
    pub source: SourceSpec,
    #[serde(default)]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    pub exact: f64,
    pub estimate: f64,
    pub success: bool,
    pub space: SpaceReport,
}

impl TrialRow {
    pub fn ratio(&self) -> Option<f64> {
        (self.exact != 0.0).then(|| self.estimate / self.exact)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<TrialRow>,
    /// Contract probability minus 0.05.
    pub floor: f64,
}

impl ExperimentResult {
    pub fn success_rate(&self) -> f64 {
        if self.rows.is_empty() {
            return 1.0;
        }
        self.rows.iter().filter(|r| r.success).count() as f64 / self.rows.len() as f64
    }

    pub fn passed(&self) -> bool {
        self.success_rate() >= self.floor
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let ratio = r.ratio().map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.trial,
                r.seed,
                r.exact,
                r.estimate,
                ratio,
                r.success as u8,
                r.space.counter_bits,
                r.space.seed_bits,
                r.space.total_bits
            )
            .expect("writing to a String");
        }
        out
    }
}

/// Space of a finalized sketch.
pub fn space_report<S: LinearSketch>(sketch: &S) -> SpaceReport {
    sketch.space()
}

enum Input {
    Vector(TurnstileStream),
    Heavy(TurnstileStream, Option<Vec<u64>>),
    Matrix(MatrixStream),
}

fn shuffled(n: u64, m: u64, mut updates: Vec<Update>, r: &mut ChaCha8Rng) -> TurnstileStream {
    updates.shuffle(r);
    TurnstileStream::from_updates(n, m, updates)
}

fn draw(spec: &SourceSpec, seed: u64) -> Result<Input> {
    let mut r = ChaCha8Rng::seed_from_u64(derive_seed(seed, label("bench.source"), 0));
    Ok(match spec {
        SourceSpec::File { path } => Input::Vector(TurnstileStream::parse(&std::fs::read_to_string(path)?)?),
        SourceSpec::Planted { n, l0, m, churn } => {
            if l0 > n || *m == 0 {
                return Err(SketchError::invalid("planted source needs l0 ≤ n and m ≥ 1"));
            }
            let idx = rand::seq::index::sample(&mut r, *n as usize, *l0 as usize);
            let mut ups: Vec<Update> = idx
                .into_iter()
                .map(|i| {
                    let v = r.random_range(1..=*m as i64);
                    Update::new(i as u64, if r.random_bool(0.5) { v } else { -v })
                })
                .collect();
            for _ in 0..*churn {
                let i = r.random_range(0..*n);
                ups.push(Update::new(i, 1));
                ups.push(Update::new(i, -1));
            }
            Input::Vector(shuffled(*n, m + 1, ups, &mut r))
        }
        SourceSpec::Random { n, m } => {
            let m = *m as i64;
            let x = FrequencyVector::from_entries((0..*n).map(|_| r.random_range(-m..=m)).collect());
            Input::Vector(TurnstileStream::from_vector(&x, m.max(1) as u64))
        }
        SourceSpec::PlantedHeavy { n, k, m } => {
            let heavy = (k / 4).max(1) as usize;
            if (*n as usize) < heavy || *k == 0 {
                return Err(SketchError::invalid("planted heavy source needs n ≥ k/4 and k ≥ 1"));
            }
            let mut v: Vec<i64> = (0..*n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut r);
                    (z * *m as f64).round() as i64
                })
                .collect();
            let idx = rand::seq::index::sample(&mut r, *n as usize, heavy);
            let light: f64 = v.iter().map(|&a| (a as f64).powi(2)).sum();
            let size = (4.0 * light / *k as f64).sqrt().ceil().max(1.0) as i64;
            for i in idx {
                v[i] = if r.random_bool(0.5) { size } else { -size };
            }
            let bound = v.iter().map(|a| a.unsigned_abs()).max().unwrap_or(1).max(1);
            let x = FrequencyVector::from_entries(v);
            let ups = TurnstileStream::from_vector(&x, bound).updates().to_vec();
            Input::Heavy(shuffled(*n, bound, ups, &mut r), None)
        }
        SourceSpec::Pw11 { n, k, bits } => {
            let inst = gen_pw11(*n, *k, seed)?;
            let support = inst.support.iter().map(|&i| i as u64).collect();
            Input::Heavy(inst.quantized_stream(*bits), Some(support))
        }
        SourceSpec::Coin { len, beta, mode } => {
            Input::Vector(gen_coin_stream(&CoinStreamSpec::new(*len, *beta, *mode), seed)?)
        }
        SourceSpec::Augdisj { n, s, r: layers } => {
            Input::Vector(gen_augdisj(*n, *s, *layers, seed)?.protocol_stream())
        }
        SourceSpec::MatrixFile { path } => {
            Input::Matrix(MatrixStream::parse(&std::fs::read_to_string(path)?)?)
        }
        SourceSpec::MatrixRandom { rows, cols, m } => {
            let m = *m as i64;
            let a = DMatrix::from_fn(*rows as usize, *cols as usize, |_, _| r.random_range(-m..=m));
            Input::Matrix(MatrixStream::from_dense(&a, m.max(1) as u64))
        }
        SourceSpec::MatrixIdentity { n } => Input::Matrix(MatrixStream::from_dense(
            &DMatrix::<i64>::identity(*n as usize, *n as usize),
            1,
        )),
        SourceSpec::MatrixRankOne { n, m } => {
            let m = *m as i64;
            let u: Vec<i64> = (0..*n).map(|_| r.random_range(-m..=m)).collect();
            let v: Vec<i64> = (0..*n).map(|_| r.random_range(-m..=m)).collect();
            let a = DMatrix::from_fn(*n as usize, *n as usize, |i, j| u[i] * v[j]);
            Input::Matrix(MatrixStream::from_dense(&a, (m * m).max(1) as u64))
        }
    })
}

fn within(value: f64, truth: f64, lo: f64, hi: f64) -> bool {
    value >= lo * truth - 1e-9 * truth.abs() && value <= hi * truth + 1e-9 * truth.abs()
}

/// Contract probability of each estimator.
fn contract_prob(estimator: &str) -> Result<f64> {
    Ok(match estimator {
        "l0-rough" | "pstable" | "ams" | "lp-large" => 0.9,
        "l0-twopass" => 0.8,
        "l0-threepass" => 0.75,
        "fp-twopass" => 0.85,
        "heavy" => 0.95,
        "fq" | "schatten" | "cascaded" => 2.0 / 3.0,
        other => return Err(unknown_estimator(other)),
    })
}

fn unknown_estimator(id: &str) -> SketchError {
    SketchError::invalid(format!(
        "unknown estimator {id:?}; valid ids: {}",
        ESTIMATORS.join(", ")
    ))
}

fn vector(input: Input) -> Result<TurnstileStream> {
    match input {
        Input::Vector(s) | Input::Heavy(s, _) => Ok(s),
        Input::Matrix(_) => Err(SketchError::invalid("estimator needs a vector source")),
    }
}

fn matrix(input: Input) -> Result<MatrixStream> {
    match input {
        Input::Matrix(a) => Ok(a),
        _ => Err(SketchError::invalid("estimator needs a matrix source")),
    }
}

/// Per-run state computed once, before the trials.
struct Prepared {
    schatten_gamma: Option<f64>,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let mut out = Prepared {
        schatten_gamma: None,
    };
    if cfg.estimator == "schatten" && cfg.trials > 0 {
        let n = match &cfg.source {
            SourceSpec::MatrixRandom { rows, cols, .. } => *rows.max(cols),
            SourceSpec::MatrixIdentity { n } | SourceSpec::MatrixRankOne { n, .. } => *n,
            SourceSpec::MatrixFile { path } => {
                let a = MatrixStream::parse(&std::fs::read_to_string(path)?)?;
                a.rows().max(a.cols())
            }
            _ => return Err(SketchError::invalid("schatten needs a matrix source")),
        };
        let p = cfg.params.p.unwrap_or(4.0);
        let alpha = cfg.params.alpha.unwrap_or(2.0);
        let plan = plan_schatten(n, p, alpha)?;
        let trials = cfg.params.calibration_trials.unwrap_or(200);
        let cal = calibrate_gamma(&plan, trials, derive_seed(cfg.seed, label("bench.gamma"), 0))?;
        out.schatten_gamma = Some(cal.gamma);
    }
    Ok(out)
}

fn run_trial(cfg: &ExperimentConfig, prep: &Prepared, trial: usize) -> Result<TrialRow> {
    let seed = derive_seed(cfg.seed, label("bench.trial"), trial as u64);
    let input = draw(&cfg.source, seed)?;
    let ps = &cfg.params;
    let sk_seed = derive_seed(seed, label("bench.sketch"), 0);
    let (exact, estimate, success, space) = match cfg.estimator.as_str() {
        "l0-rough" => {
            let s = vector(input)?;
            let t = ps.t.unwrap_or(4);
            let params = RoughParams::profile(ps.profile.unwrap_or(L0Profile::Full), t);
            let mut sk = RoughL0Sketch::new(s.n(), s.m_bound(), params, sk_seed)?;
            sk.feed(&s);
            let rep = sk.estimate();
            let exact = exact_moment(&accumulate(&s)?, 0.0);
            let f = sk.factor();
            let ok = if exact == 0.0 { rep.value == 0.0 } else { within(rep.value, exact, 1.0 / f, f) };
            (exact, rep.value, ok, rep.space)
        }
        "l0-twopass" | "l0-threepass" => {
            let s = vector(input)?;
            let exact = exact_moment(&accumulate(&s)?, 0.0);
            let mut src = &s;
            let (rep, eps) = if cfg.estimator == "l0-twopass" {
                let c = TwoPassConfig::with_eps(ps.eps.unwrap_or(0.1));
                (twopass_estimate(&mut src, &c, sk_seed)?, c.eps)
            } else {
                let c = ThreePassConfig::with_eps(ps.eps.unwrap_or(0.05));
                (threepass_estimate(&mut src, &c, sk_seed)?, c.eps)
            };
            let ok = within(rep.value, exact, 1.0 - eps, 1.0 + eps);
            (exact, rep.value, ok, rep.space)
        }
        "pstable" => {
            let s = vector(input)?;
            let p = ps.p.unwrap_or(1.0);
            let eps = ps.eps.unwrap_or(0.2);
            let mut sk = PStableSketch::new(s.n(), s.m_bound(), p, eps, sk_seed)?;
            sk.feed(&s);
            let rep = sk.report(eps);
            let exact = exact_moment(&accumulate(&s)?, p);
            let ok = within(rep.value, exact, 1.0 - eps, 1.0 + eps);
            (exact, rep.value, ok, rep.space)
        }
        "ams" => {
            let s = vector(input)?;
            let eps = ps.eps.unwrap_or(0.2);
            let mut src = &s;
            let rep = fp_onepass_estimate(&mut src, 2.0, eps, sk_seed)?;
            let exact = exact_fp(&accumulate(&s)?, 2.0);
            let ok = within(rep.value, exact, 1.0 - eps, 1.0 + eps);
            (exact, rep.value, ok, rep.space)
        }
        "fp-twopass" => {
            let s = vector(input)?;
            let c = FpTwoPassConfig {
                p: ps.p.unwrap_or(1.0),
                eps: ps.eps.unwrap_or(0.1),
                ..FpTwoPassConfig::default()
            };
            let mut src = &s;
            let rep = fp_twopass_estimate(&mut src, &c, sk_seed)?.report;
            let exact = exact_fp(&accumulate(&s)?, c.p);
            let ok = within(rep.value, exact, 1.0 - c.eps, 1.0 + c.eps);
            (exact, rep.value, ok, rep.space)
        }
        "lp-large" => {
            let s = vector(input)?;
            let p = ps.p.unwrap_or(4.0);
            let plan = LargePPlan::new(s.n(), p, ps.alpha.unwrap_or(4.0), ps.inner.unwrap_or(InnerKind::Psamp))?;
            let mut inner = plan.build_inner(sk_seed)?;
            let rep = lp_large_estimate(&s, &plan, inner.as_mut())?;
            let exact = exact_moment(&accumulate(&s)?, p);
            let ok = within(rep.value, exact, 1.0, rep.factor);
            (exact, rep.value, ok, rep.space)
        }
        "fq" => {
            let s = vector(input)?;
            let q = ps.q.unwrap_or(4.0);
            let rep = fq_precision_estimate(&s, q, sk_seed)?;
            let exact = exact_fp(&accumulate(&s)?, q);
            let ok = within(rep.value, exact, 0.5, 2.0);
            (exact, rep.value, ok, rep.space)
        }
        "heavy" => {
            let (s, planted) = match input {
                Input::Heavy(s, planted) => (s, planted),
                other => (vector(other)?, None),
            };
            let k = ps.k.unwrap_or(64);
            let x = accumulate(&s)?;
            let alpha = ps.alpha.unwrap_or(4.0);
            let mut hh = HeavyHitters::new(s.n(), k, alpha, sk_seed)?;
            hh.feed(&s);
            let rep = hh.report()?;
            let ok = match &planted {
                Some(support) => &rep.set == support,
                None => {
                    let heavy = exact_heavy_set(&x, k);
                    let light = exact_heavy_set(&x, (alpha * k as f64).ceil() as u64);
                    heavy.iter().all(|i| rep.set.binary_search(i).is_ok())
                        && rep.set.iter().all(|i| light.binary_search(i).is_ok())
                }
            };
            let exact = planted.map(|p| p.len()).unwrap_or_else(|| exact_heavy_set(&x, k).len());
            (exact as f64, rep.set.len() as f64, ok, hh.space())
        }
        "schatten" => {
            let a = matrix(input)?;
            let p = ps.p.unwrap_or(4.0);
            let n = a.rows().max(a.cols());
            let plan = plan_schatten(n, p, ps.alpha.unwrap_or(2.0))?
                .with_gamma(prep.schatten_gamma.unwrap_or(1.0));
            let rep = schatten_estimate(&a, &plan, sk_seed)?;
            let exact = exact_schatten(&a, p)?;
            let ok = within(rep.value, exact, 1.0, rep.factor);
            (exact, rep.value, ok, rep.space)
        }
        "cascaded" => {
            let a = matrix(input)?;
            let (p, q) = (ps.p.unwrap_or(3.0), ps.q.unwrap_or(4.0));
            let rep = cascaded_estimate(&a, p, q, ps.alpha.unwrap_or(8.0), sk_seed)?;
            let exact = exact_cascaded(&a, p, q)?;
            let ok = within(rep.value, exact, 1.0, rep.factor);
            (exact, rep.value, ok, rep.space)
        }
        other => return Err(unknown_estimator(other)),
    };
    Ok(TrialRow {
        trial,
        seed,
        exact,
        estimate,
        success,
        space,
    })
}

/// Runs `cfg.trials` seeded trials in parallel; rows come back in trial
/// order, so equal configs give identical CSV.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let floor = contract_prob(&cfg.estimator)? - 0.05;
    let prep = prepare(cfg)?;
    let rows = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, &prep, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult { rows, floor })
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml_like(text)
    }
}

fn toml_like(text: &str) -> Result<ExperimentConfig> {
    toml::from_str(text).map_err(|e| SketchError::Parse {
        line: e.span().map(|s| text[..s.start].lines().count().max(1)).unwrap_or(0),
        message: e.message().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_estimator_lists_ids() {
        let cfg = ExperimentConfig {
            estimator: "nope".into(),
            params: EstimatorParams::default(),
            source: SourceSpec::Random { n: 4, m: 1 },
            trials: 1,
            seed: 0,
            output: None,
        };
        let err = run_experiment(&cfg).unwrap_err().to_string();
        assert!(err.contains("l0-rough"), "{err}");
    }

    #[test]
    fn zero_trials_header_only() {
        let cfg = ExperimentConfig {
            estimator: "ams".into(),
            params: EstimatorParams::default(),
            source: SourceSpec::Random { n: 4, m: 1 },
            trials: 0,
            seed: 0,
            output: None,
        };
        assert_eq!(run_experiment(&cfg).unwrap().to_csv(), format!("{CSV_HEADER}\n"));
    }
}
