//! `α`-approximate ℓ_p for `p > 2` through the sandwich
//! `‖x‖_p ≤ ‖x‖_q ≤ n^{1/q−1/p}‖x‖_p`.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cascaded::{FqParams, FqSketch};
use crate::error::{Result, SketchError};
use crate::lp::AmsSketch;
use crate::sketch::{EstimateReport, LinearSketch, SpaceReport, REAL_WORD_BITS};
use crate::stream::{norm_of, TurnstileStream, Update};

/// A streaming estimator of `‖x‖_q` with `‖x‖_q/f ≤ Z ≤ f‖x‖_q` with
/// probability `success_prob`.
pub trait NormEstimator {
    fn order(&self) -> f64;
    fn factor(&self) -> f64;
    fn success_prob(&self) -> f64;
    fn update(&mut self, u: Update);
    fn estimate_norm(&self) -> f64;
    fn space(&self) -> SpaceReport;
}

/// Stores `x` verbatim.
#[derive(Debug, Clone)]
pub struct ExactNorm {
    q: f64,
    x: Vec<i64>,
}

impl ExactNorm {
    pub fn new(n: u64, q: f64) -> Self {
        Self {
            q,
            x: vec![0; n as usize],
        }
    }
}

impl NormEstimator for ExactNorm {
    fn order(&self) -> f64 {
        self.q
    }

    fn factor(&self) -> f64 {
        1.0
    }

    fn success_prob(&self) -> f64 {
        1.0
    }

    fn update(&mut self, u: Update) {
        self.x[u.index as usize] += u.delta;
    }

    fn estimate_norm(&self) -> f64 {
        let v: Vec<f64> = self.x.iter().map(|&c| c as f64).collect();
        norm_of(&v, self.q)
    }

    fn space(&self) -> SpaceReport {
        SpaceReport::new(self.x.len() as u64 * REAL_WORD_BITS, 0, 0)
    }
}

/// `ℓ₂` through an AMS sketch at accuracy `eps`.
#[derive(Debug, Clone)]
pub struct AmsNorm {
    sketch: AmsSketch,
    eps: f64,
}

impl AmsNorm {
    pub fn new(n: u64, eps: f64, seed: u64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(SketchError::invalid("AMS accuracy must lie in (0, 1)"));
        }
        Ok(Self {
            sketch: AmsSketch::new(n, eps, seed)?,
            eps,
        })
    }
}

impl NormEstimator for AmsNorm {
    fn order(&self) -> f64 {
        2.0
    }

    fn factor(&self) -> f64 {
        (1.0 / (1.0 - self.eps)).sqrt()
    }

    fn success_prob(&self) -> f64 {
        0.9
    }

    fn update(&mut self, u: Update) {
        self.sketch.update(u);
    }

    fn estimate_norm(&self) -> f64 {
        self.sketch.estimate_f2().max(0.0).sqrt()
    }

    fn space(&self) -> SpaceReport {
        self.sketch.space()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerKind {
    Exact,
    Psamp,
    Ams,
}

impl FromStr for InnerKind {
    type Err = SketchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(InnerKind::Exact),
            "psamp" => Ok(InnerKind::Psamp),
            "ams" => Ok(InnerKind::Ams),
            other => Err(SketchError::invalid(format!("unknown inner estimator {other:?}"))),
        }
    }
}

/// `q = 1/(1/p + ln α/ln n)`, the order with `n^{1/q−1/p} = α`.
pub fn derive_q(n: u64, p: f64, alpha: f64) -> Result<f64> {
    if !(p > 2.0) {
        return Err(SketchError::invalid(format!("large-p reduction needs p > 2, got {p}")));
    }
    if n < 2 {
        return Err(SketchError::invalid("dimension must be at least 2"));
    }
    let ln_n = (n as f64).ln();
    let top = (0.5 - 1.0 / p) * ln_n;
    if !(alpha >= 1.0) {
        return Err(SketchError::invalid(format!(
            "approximation target below constant-factor regime: alpha = {alpha}"
        )));
    }
    if alpha.ln() > top * (1.0 + 1e-12) {
        return Err(SketchError::invalid(format!(
            "trivial: alpha = {alpha} exceeds n^(1/2-1/p)"
        )));
    }
    Ok((1.0 / (1.0 / p + alpha.ln() / ln_n)).max(2.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LargePPlan {
    pub n: u64,
    pub p: f64,
    pub alpha: f64,
    pub q: f64,
    pub inner: InnerKind,
}

impl LargePPlan {
    pub fn new(n: u64, p: f64, alpha: f64, inner: InnerKind) -> Result<Self> {
        let q = derive_q(n, p, alpha)?;
        if inner == InnerKind::Ams && q > 2.0 + 1e-9 {
            return Err(SketchError::invalid(format!(
                "AMS inner only serves q = 2, plan needs q = {q}"
            )));
        }
        Ok(Self {
            n,
            p,
            alpha,
            q,
            inner,
        })
    }

    pub fn build_inner(&self, seed: u64) -> Result<Box<dyn NormEstimator>> {
        Ok(match self.inner {
            InnerKind::Exact => Box::new(ExactNorm::new(self.n, self.q)),
            InnerKind::Ams => Box::new(AmsNorm::new(self.n, 0.5, seed)?),
            InnerKind::Psamp => {
                if self.q <= 2.0 + 1e-9 {
                    Box::new(AmsNorm::new(self.n, 0.5, seed)?)
                } else {
                    Box::new(FqSketch::new(self.n, self.q, seed)?)
                }
            }
        })
    }

    /// Space of the precision-sampling inner sketch, computed without
    /// allocating it.
    pub fn planned_space(&self) -> SpaceReport {
        FqParams::for_dimension(self.n, self.q.max(2.0 + 1e-9), 1.0).planned_space()
    }
}

/// `Z = f·Ẑ` so that `‖x‖_p ≤ Z ≤ α f²‖x‖_p` whenever the inner estimate
/// `Ẑ` is within factor `f` of `‖x‖_q`.
pub fn lp_large_estimate(
    stream: &TurnstileStream,
    plan: &LargePPlan,
    inner: &mut dyn NormEstimator,
) -> Result<EstimateReport> {
    if (inner.order() - plan.q).abs() > 1e-9 && !(plan.q <= 2.0 + 1e-9 && inner.order() == 2.0) {
        return Err(SketchError::invalid(format!(
            "inner estimator has order {}, plan needs {}",
            inner.order(),
            plan.q
        )));
    }
    for &u in stream.updates() {
        inner.update(u);
    }
    let f = inner.factor();
    Ok(EstimateReport {
        value: f * inner.estimate_norm(),
        factor: plan.alpha * f * f,
        success_prob: inner.success_prob(),
        space: inner.space(),
    })
}

/// Larger of a one-sided worst-case underestimate and a learned estimate
/// that underestimates when its oracle fails.
pub fn combine_with_oracle(worst_case: f64, learned: f64) -> f64 {
    worst_case.max(learned)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_q_examples() {
        assert_eq!(derive_q(1 << 16, 4.0, 1.0).unwrap(), 4.0);
        let q = derive_q(1 << 16, 4.0, 2.0).unwrap();
        assert!((q - 3.2).abs() < 1e-12);
        assert!((2f64.powf(16.0 * (1.0 / q - 0.25)) - 2.0).abs() < 1e-12);
        let top = (1u64 << 16) as f64;
        assert!((derive_q(1 << 16, 4.0, top.powf(0.25)).unwrap() - 2.0).abs() < 1e-9);
        assert!(derive_q(1 << 16, 4.0, 0.5).is_err());
        assert!(derive_q(1 << 16, 4.0, 1000.0).is_err());
        assert!(derive_q(1 << 16, 2.0, 1.0).is_err());
    }

    #[test]
    fn ams_inner_rejected_for_q_above_two() {
        assert!(LargePPlan::new(4096, 4.0, 2.0, InnerKind::Ams).is_err());
    }

    #[test]
    fn combine() {
        assert_eq!(combine_with_oracle(3.0, 0.0), 3.0);
        assert_eq!(combine_with_oracle(3.0, 5.0), 5.0);
    }
}
