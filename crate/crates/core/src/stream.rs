//! Turnstile stream model and exact reference oracles.
//!
//! Stream files are line oriented. The header is `n M` for vector streams and
//! `rows cols M` for matrix streams; every following line is `index delta`
//! (resp. `row col delta`). `#` starts a comment that runs to end of line.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Result, SketchError};

/// A single coordinate update `x[index] += delta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Update {
    pub index: u64,
    pub delta: i64,
}

impl Update {
    pub fn new(index: u64, delta: i64) -> Self {
        Self { index, delta }
    }
}

/// Ordered updates over `[n]` with a declared magnitude bound `M`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TurnstileStream {
    n: u64,
    m_bound: u64,
    updates: Vec<Update>,
}

impl TurnstileStream {
    pub fn new(n: u64, m_bound: u64) -> Self {
        Self {
            n,
            m_bound,
            updates: Vec::new(),
        }
    }

    pub fn from_updates(n: u64, m_bound: u64, updates: Vec<Update>) -> Self {
        Self {
            n,
            m_bound,
            updates,
        }
    }

    /// Insert-only stream realizing `x` with one update per nonzero entry.
    pub fn from_vector(x: &FrequencyVector, m_bound: u64) -> Self {
        let updates = x
            .entries()
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(i, &v)| Update::new(i as u64, v))
            .collect();
        Self::from_updates(x.len() as u64, m_bound, updates)
    }

    pub fn push(&mut self, index: u64, delta: i64) {
        self.updates.push(Update::new(index, delta));
    }

    pub fn extend(&mut self, other: &TurnstileStream) {
        self.updates.extend_from_slice(&other.updates);
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn m_bound(&self) -> u64 {
        self.m_bound
    }

    pub fn updates(&self) -> &[Update] {
        &self.updates
    }

    pub fn len(&self) -> usize {
        self.updates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.updates.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Update> + '_ {
        self.updates.iter().copied()
    }

    /// Checks index range, per-update magnitude and the prefix `‖x‖_∞ ≤ M` invariant.
    pub fn validate(&self) -> Result<()> {
        let mut x: HashMap<u64, i64> = HashMap::new();
        for u in &self.updates {
            if u.index >= self.n {
                return Err(SketchError::IndexOutOfRange {
                    index: u.index,
                    n: self.n,
                });
            }
            if u.delta.unsigned_abs() > self.m_bound {
                return Err(SketchError::DeltaOutOfRange {
                    delta: u.delta,
                    bound: self.m_bound,
                });
            }
            let v = x.entry(u.index).or_insert(0);
            *v += u.delta;
            if v.unsigned_abs() > self.m_bound {
                return Err(SketchError::InvalidParameter(format!(
                    "prefix value {} at index {} exceeds bound {}",
                    v, u.index, self.m_bound
                )));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.m_bound);
        for u in &self.updates {
            let _ = writeln!(out, "{} {}", u.index, u.delta);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = content_lines(text);
        let (line_no, header) = lines.next().ok_or(SketchError::Parse {
            line: 0,
            message: "missing header".into(),
        })?;
        let [n, m_bound] = parse_fields::<2>(line_no, &header)?;
        let mut stream = TurnstileStream::new(n as u64, m_bound as u64);
        for (line_no, line) in lines {
            let [index, delta] = parse_fields::<2>(line_no, &line)?;
            if index < 0 {
                return Err(SketchError::Parse {
                    line: line_no,
                    message: "negative index".into(),
                });
            }
            stream.push(index as u64, delta);
        }
        Ok(stream)
    }
}

/// Streams that can be read in one or more passes.
pub trait UpdateSource {
    fn dimension(&self) -> u64;
    fn magnitude_bound(&self) -> u64;
    /// Returns the updates for pass number `pass` (0-based).
    fn pass(&mut self, pass: usize) -> Result<Box<dyn Iterator<Item = Update> + '_>>;
}

impl UpdateSource for TurnstileStream {
    fn dimension(&self) -> u64 {
        self.n
    }

    fn magnitude_bound(&self) -> u64 {
        self.m_bound
    }

    fn pass(&mut self, _pass: usize) -> Result<Box<dyn Iterator<Item = Update> + '_>> {
        Ok(Box::new(self.updates.iter().copied()))
    }
}

impl UpdateSource for &TurnstileStream {
    fn dimension(&self) -> u64 {
        self.n
    }

    fn magnitude_bound(&self) -> u64 {
        self.m_bound
    }

    fn pass(&mut self, _pass: usize) -> Result<Box<dyn Iterator<Item = Update> + '_>> {
        Ok(Box::new(self.updates.iter().copied()))
    }
}

/// A stream that can only be read once, e.g. a pipe.
pub struct OneShot<I> {
    n: u64,
    m_bound: u64,
    inner: Option<I>,
}

impl<I: Iterator<Item = Update>> OneShot<I> {
    pub fn new(n: u64, m_bound: u64, inner: I) -> Self {
        Self {
            n,
            m_bound,
            inner: Some(inner),
        }
    }
}

impl<I: Iterator<Item = Update>> UpdateSource for OneShot<I> {
    fn dimension(&self) -> u64 {
        self.n
    }

    fn magnitude_bound(&self) -> u64 {
        self.m_bound
    }

    fn pass(&mut self, pass: usize) -> Result<Box<dyn Iterator<Item = Update> + '_>> {
        match self.inner.take() {
            Some(it) if pass == 0 => Ok(Box::new(it)),
            _ => Err(SketchError::NotReplayable { pass }),
        }
    }
}

/// Dense accumulated vector `x`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyVector {
    entries: Vec<i64>,
}

impl FrequencyVector {
    pub fn zeros(n: usize) -> Self {
        Self {
            entries: vec![0; n],
        }
    }

    pub fn from_entries(entries: Vec<i64>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[i64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm_inf(&self) -> u64 {
        self.entries
            .iter()
            .map(|v| v.unsigned_abs())
            .max()
            .unwrap_or(0)
    }
}

/// Sums the deltas of `stream` per index.
pub fn accumulate(stream: &TurnstileStream) -> Result<FrequencyVector> {
    let n = usize::try_from(stream.n())
        .map_err(|_| SketchError::invalid("dimension too large for a dense vector"))?;
    let mut entries = vec![0i64; n];
    for u in stream.iter() {
        if u.index >= stream.n() {
            return Err(SketchError::IndexOutOfRange {
                index: u.index,
                n: stream.n(),
            });
        }
        entries[u.index as usize] += u.delta;
    }
    Ok(FrequencyVector { entries })
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `Σ|x_i|^p` for `p > 0`, the nonzero count for `p = 0`.
pub fn exact_fp(x: &FrequencyVector, p: f64) -> f64 {
    assert!(p >= 0.0, "moment order must be nonnegative");
    if p == 0.0 {
        return x.entries.iter().filter(|&&v| v != 0).count() as f64;
    }
    if p == 2.0 {
        let s: i128 = x.entries.iter().map(|&v| v as i128 * v as i128).sum();
        return s as f64;
    }
    compensated_sum(
        x.entries
            .iter()
            .filter(|&&v| v != 0)
            .map(|&v| (v.unsigned_abs() as f64).powf(p)),
    )
}

/// `‖x‖_p` for `p > 0`, `ℓ₀` for `p = 0`.
pub fn exact_moment(x: &FrequencyVector, p: f64) -> f64 {
    if p == 0.0 {
        return exact_fp(x, 0.0);
    }
    exact_fp(x, p).powf(1.0 / p)
}

/// Same as [`exact_moment`] for a real-valued vector.
pub fn norm_of(values: &[f64], p: f64) -> f64 {
    if p == 0.0 {
        return values.iter().filter(|v| **v != 0.0).count() as f64;
    }
    compensated_sum(values.iter().map(|v| v.abs().powf(p))).powf(1.0 / p)
}

/// Symmetric nondecreasing loss `G` with growth parameter `gamma`.
#[derive(Clone)]
pub struct GEstimator {
    evaluate: Arc<dyn Fn(i64) -> f64 + Send + Sync>,
    gamma: f64,
}

impl std::fmt::Debug for GEstimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GEstimator")
            .field("gamma", &self.gamma)
            .finish_non_exhaustive()
    }
}

impl GEstimator {
    /// Validates `G(0) = 0`, symmetry, monotonicity and the growth condition
    /// `G(y)/G(x) ≥ |y/x|^gamma` on a fixed grid of sample pairs.
    pub fn new(evaluate: impl Fn(i64) -> f64 + Send + Sync + 'static, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(SketchError::invalid("gamma must be a positive real"));
        }
        if evaluate(0) != 0.0 {
            return Err(SketchError::invalid("G(0) must be 0"));
        }
        let samples: Vec<i64> = (0..40)
            .map(|i| (1.6f64.powi(i)).round() as i64)
            .chain([1, 2, 3, 5, 7, 10])
            .collect();
        for &a in &samples {
            let (ga, gm) = (evaluate(a), evaluate(-a));
            if !(ga >= 0.0) || (ga - gm).abs() > 1e-12 * ga.max(1.0) {
                return Err(SketchError::invalid(format!("G is not symmetric at {a}")));
            }
            for &b in &samples {
                if b <= a {
                    continue;
                }
                let gb = evaluate(b);
                if gb < ga {
                    return Err(SketchError::invalid(format!(
                        "G decreases between {a} and {b}"
                    )));
                }
                let need = (b as f64 / a as f64).powf(gamma);
                if gb / ga < need * (1.0 - 1e-9) {
                    return Err(SketchError::invalid(format!(
                        "growth condition fails for ({a}, {b})"
                    )));
                }
            }
        }
        Ok(Self {
            evaluate: Arc::new(evaluate),
            gamma,
        })
    }

    /// `G(t) = |t|^exponent`, with growth parameter equal to the exponent.
    pub fn power(exponent: f64) -> Result<Self> {
        Self::new(move |t| (t.unsigned_abs() as f64).powf(exponent), exponent)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn eval(&self, t: i64) -> f64 {
        (self.evaluate)(t)
    }
}

/// `Σ_i G(x_i)`.
pub fn exact_g_norm(x: &FrequencyVector, g: &GEstimator) -> f64 {
    compensated_sum(x.entries.iter().map(|&v| g.eval(v)))
}

/// `{i : x_i² ≥ ‖x‖₂²/k}` in increasing index order.
pub fn exact_heavy_set(x: &FrequencyVector, k: u64) -> Vec<u64> {
    assert!(k >= 1, "k must be at least 1");
    let f2: i128 = x.entries.iter().map(|&v| v as i128 * v as i128).sum();
    if f2 == 0 {
        return Vec::new();
    }
    x.entries
        .iter()
        .enumerate()
        .filter(|(_, &v)| (v as i128 * v as i128) * k as i128 >= f2)
        .map(|(i, _)| i as u64)
        .collect()
}

/// Matrix stream viewed as an `rows*cols`-dimensional turnstile stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixStream {
    rows: u64,
    cols: u64,
    m_bound: u64,
    updates: Vec<(u64, u64, i64)>,
}

impl MatrixStream {
    pub fn new(rows: u64, cols: u64, m_bound: u64) -> Self {
        Self {
            rows,
            cols,
            m_bound,
            updates: Vec::new(),
        }
    }

    pub fn square(n: u64, m_bound: u64) -> Self {
        Self::new(n, n, m_bound)
    }

    pub fn push(&mut self, row: u64, col: u64, delta: i64) {
        self.updates.push((row, col, delta));
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn cols(&self) -> u64 {
        self.cols
    }

    pub fn m_bound(&self) -> u64 {
        self.m_bound
    }

    pub fn updates(&self) -> &[(u64, u64, i64)] {
        &self.updates
    }

    /// Insert-only stream of every nonzero of `a` in row-major order.
    pub fn from_dense(a: &DMatrix<i64>, m_bound: u64) -> Self {
        let mut s = Self::new(a.nrows() as u64, a.ncols() as u64, m_bound);
        for r in 0..a.nrows() {
            for c in 0..a.ncols() {
                if a[(r, c)] != 0 {
                    s.push(r as u64, c as u64, a[(r, c)]);
                }
            }
        }
        s
    }

    pub fn flattened(&self) -> TurnstileStream {
        let updates = self
            .updates
            .iter()
            .map(|&(r, c, d)| Update::new(r * self.cols + c, d))
            .collect();
        TurnstileStream::from_updates(self.rows * self.cols, self.m_bound, updates)
    }

    pub fn accumulate(&self) -> Result<DMatrix<f64>> {
        let mut a = DMatrix::<f64>::zeros(self.rows as usize, self.cols as usize);
        for &(r, c, d) in &self.updates {
            if r >= self.rows || c >= self.cols {
                return Err(SketchError::IndexOutOfRange {
                    index: r * self.cols + c,
                    n: self.rows * self.cols,
                });
            }
            a[(r as usize, c as usize)] += d as f64;
        }
        Ok(a)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.rows, self.cols, self.m_bound);
        for &(r, c, d) in &self.updates {
            let _ = writeln!(out, "{r} {c} {d}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = content_lines(text);
        let (line_no, header) = lines.next().ok_or(SketchError::Parse {
            line: 0,
            message: "missing header".into(),
        })?;
        let [rows, cols, m_bound] = parse_fields::<3>(line_no, &header)?;
        let mut s = MatrixStream::new(rows as u64, cols as u64, m_bound as u64);
        for (line_no, line) in lines {
            let [r, c, d] = parse_fields::<3>(line_no, &line)?;
            if r < 0 || c < 0 {
                return Err(SketchError::Parse {
                    line: line_no,
                    message: "negative coordinate".into(),
                });
            }
            s.push(r as u64, c as u64, d);
        }
        Ok(s)
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, String)> + '_ {
    text.lines().enumerate().filter_map(|(i, line)| {
        let body = line.split('#').next().unwrap_or("").trim();
        (!body.is_empty()).then(|| (i + 1, body.to_string()))
    })
}

fn parse_fields<const N: usize>(line: usize, body: &str) -> Result<[i64; N]> {
    let parts: Vec<&str> = body.split_whitespace().collect();
    if parts.len() != N {
        return Err(SketchError::Parse {
            line,
            message: format!("expected {N} fields, found {}", parts.len()),
        });
    }
    let mut out = [0i64; N];
    for (slot, part) in out.iter_mut().zip(parts) {
        *slot = part.parse().map_err(|_| SketchError::Parse {
            line,
            message: format!("not an integer: {part}"),
        })?;
    }
    Ok(out)
}

/// Singular values of a dense matrix, largest first.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Schatten-`p` norm of a dense matrix.
pub fn schatten_norm(a: &DMatrix<f64>, p: f64) -> f64 {
    norm_of(&singular_values(a), p)
}

/// Exact Schatten-`p` norm of the accumulated matrix.
pub fn exact_schatten(a: &MatrixStream, p: f64) -> Result<f64> {
    Ok(schatten_norm(&a.accumulate()?, p))
}

/// `(Σ_i (Σ_j |A_ij|^q)^{p/q})^{1/p}` for a dense matrix.
pub fn cascaded_norm(a: &DMatrix<f64>, p: f64, q: f64) -> f64 {
    let row_terms = (0..a.nrows()).map(|r| {
        let inner = compensated_sum((0..a.ncols()).map(|c| a[(r, c)].abs().powf(q)));
        inner.powf(p / q)
    });
    compensated_sum(row_terms).powf(1.0 / p)
}

pub fn exact_cascaded(a: &MatrixStream, p: f64, q: f64) -> Result<f64> {
    Ok(cascaded_norm(&a.accumulate()?, p, q))
}

/// True iff the prefix ℓ₂ norm never falls below `running max / alpha_bd`.
pub fn check_bounded_deletion(stream: &TurnstileStream, alpha_bd: f64) -> bool {
    assert!(alpha_bd >= 1.0, "alpha_bd must be at least 1");
    let mut x: HashMap<u64, i64> = HashMap::new();
    let mut f2: i128 = 0;
    let mut max_f2: i128 = 0;
    let alpha_sq = alpha_bd * alpha_bd;
    for u in stream.iter() {
        let v = x.entry(u.index).or_insert(0);
        let old = *v as i128;
        *v += u.delta;
        let new = *v as i128;
        f2 += new * new - old * old;
        max_f2 = max_f2.max(f2);
        if (f2 as f64) * alpha_sq < max_f2 as f64 {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn accumulate_examples() {
        let s = TurnstileStream::from_updates(2, 5, vec![Update::new(0, 3), Update::new(0, -1)]);
        assert_eq!(accumulate(&s).unwrap().entries(), &[2, 0]);
        let empty = TurnstileStream::new(4, 1);
        assert_eq!(accumulate(&empty).unwrap().entries(), &[0, 0, 0, 0]);
        let bad = TurnstileStream::from_updates(2, 5, vec![Update::new(2, 1)]);
        assert!(accumulate(&bad).is_err());
    }

    #[test]
    fn accumulate_matches_independent_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 50u64;
        let mut s = TurnstileStream::new(n, 1000);
        for _ in 0..1000 {
            s.push(rng.random_range(0..n), rng.random_range(-5..=5));
        }
        let x = accumulate(&s).unwrap();
        for i in 0..n {
            let direct: i64 = s
                .updates()
                .iter()
                .filter(|u| u.index == i)
                .map(|u| u.delta)
                .sum();
            assert_eq!(x.entries()[i as usize], direct);
        }
    }

    #[test]
    fn moment_examples() {
        let x = FrequencyVector::from_entries(vec![3, 4]);
        assert_eq!(exact_moment(&x, 2.0), 5.0);
        let y = FrequencyVector::from_entries(vec![0, 1, 0, -2]);
        assert_eq!(exact_moment(&y, 0.0), 2.0);
    }

    #[test]
    fn cube_moment_matches_integer_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let entries: Vec<i64> = (0..500).map(|_| rng.random_range(-1000..=1000)).collect();
        let exact: i128 = entries.iter().map(|&v| (v.abs() as i128).pow(3)).sum();
        let x = FrequencyVector::from_entries(entries);
        let got = exact_fp(&x, 3.0);
        assert!(((got - exact as f64) / exact as f64).abs() < 1e-12);
    }

    #[test]
    fn g_norm_examples() {
        let sq = GEstimator::power(2.0).unwrap();
        assert_eq!(exact_g_norm(&FrequencyVector::from_entries(vec![3, 4]), &sq), 25.0);
        assert_eq!(exact_g_norm(&FrequencyVector::zeros(5), &sq), 0.0);
        let g15 = GEstimator::power(1.5).unwrap();
        let x = FrequencyVector::from_entries(vec![-4, 9, 0, 1]);
        let want = 8.0 + 27.0 + 1.0;
        assert!((exact_g_norm(&x, &g15) - want).abs() < 1e-12);
    }

    #[test]
    fn degenerate_g_rejected() {
        assert!(GEstimator::power(0.0).is_err());
        assert!(GEstimator::new(|t| (t.unsigned_abs() as f64).powf(0.0), 1.0).is_err());
        assert!(GEstimator::new(|t| t.unsigned_abs().min(3) as f64, 1.0).is_err());
    }

    #[test]
    fn heavy_set_examples() {
        assert_eq!(
            exact_heavy_set(&FrequencyVector::from_entries(vec![10, 1, 1]), 2),
            vec![0]
        );
        assert_eq!(
            exact_heavy_set(&FrequencyVector::from_entries(vec![1, 1, 1, 1]), 4),
            vec![0, 1, 2, 3]
        );
        assert!(exact_heavy_set(&FrequencyVector::zeros(3), 2).is_empty());
    }

    #[test]
    fn schatten_examples() {
        let mut a = MatrixStream::square(2, 10);
        a.push(0, 0, 3);
        a.push(1, 1, 4);
        assert!((exact_schatten(&a, 2.0).unwrap() - 5.0).abs() < 1e-12);
        let n = 6;
        let mut id = MatrixStream::square(n, 1);
        for i in 0..n {
            id.push(i, i, 1);
        }
        let want = (n as f64).powf(0.25);
        assert!((exact_schatten(&id, 4.0).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn schatten_even_matches_trace_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut a = MatrixStream::square(8, 100);
        for r in 0..8 {
            for c in 0..8 {
                a.push(r, c, rng.random_range(-9..=9));
            }
        }
        let dense = a.accumulate().unwrap();
        let ata = dense.transpose() * &dense;
        let trace = (&ata * &ata * &ata).trace();
        let oracle = trace.powf(1.0 / 6.0);
        let got = exact_schatten(&a, 6.0).unwrap();
        assert!(((got - oracle) / oracle).abs() < 1e-8);
    }

    #[test]
    fn cascaded_examples() {
        let mut one_row = MatrixStream::new(4, 5, 10);
        for (c, v) in [(0, 3), (2, -4), (4, 1)] {
            one_row.push(2, c, v);
        }
        let row_q = (3f64.powi(3) + 4f64.powi(3) + 1.0).powf(1.0 / 3.0);
        assert!((exact_cascaded(&one_row, 2.0, 3.0).unwrap() - row_q).abs() < 1e-12);

        let (n, d) = (5u64, 7u64);
        let mut ones = MatrixStream::new(n, d, 1);
        for r in 0..n {
            for c in 0..d {
                ones.push(r, c, 1);
            }
        }
        let want = ((n * d) as f64).sqrt();
        assert!((exact_cascaded(&ones, 2.0, 2.0).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn cascaded_matches_nested_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut a = MatrixStream::square(6, 50);
        let mut dense = [[0i64; 6]; 6];
        for r in 0..6 {
            for c in 0..6 {
                let v = rng.random_range(-20..=20);
                dense[r][c] = v;
                a.push(r as u64, c as u64, v);
            }
        }
        let (p, q) = (3.0, 4.0);
        let mut outer = 0.0;
        for row in dense {
            let inner: f64 = row.iter().map(|v| (v.abs() as f64).powf(q)).sum();
            outer += inner.powf(p / q);
        }
        let want = f64::powf(outer, 1.0 / p);
        assert!(((exact_cascaded(&a, p, q).unwrap() - want) / want).abs() < 1e-12);
    }

    #[test]
    fn bounded_deletion_examples() {
        let ins = TurnstileStream::from_updates(1, 10, (0..10).map(|_| Update::new(0, 1)).collect());
        assert!(check_bounded_deletion(&ins, 1.0));
        let cancel = TurnstileStream::from_updates(1, 1, vec![Update::new(0, 1), Update::new(0, -1)]);
        assert!(!check_bounded_deletion(&cancel, 2.0));
        assert!(!check_bounded_deletion(&cancel, 1e6));
    }

    #[test]
    fn text_format_round_trip_with_comments() {
        let text = "# header next\n3 5\n0 2 # inline\n\n2 -1\n";
        let s = TurnstileStream::parse(text).unwrap();
        assert_eq!(s.n(), 3);
        assert_eq!(s.updates(), &[Update::new(0, 2), Update::new(2, -1)]);
        assert_eq!(TurnstileStream::parse(&s.to_text()).unwrap(), s);
        assert!(matches!(
            TurnstileStream::parse("3 5\n1 x\n"),
            Err(SketchError::Parse { line: 2, .. })
        ));
        let mut m = MatrixStream::new(2, 3, 4);
        m.push(1, 2, -3);
        assert_eq!(MatrixStream::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn one_shot_source_rejects_second_pass() {
        let mut src = OneShot::new(4, 1, vec![Update::new(0, 1)].into_iter());
        assert_eq!(src.pass(0).unwrap().count(), 1);
        assert!(matches!(src.pass(1), Err(SketchError::NotReplayable { pass: 1 })));
    }
}
