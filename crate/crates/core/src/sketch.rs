//! Traits and reports shared by every sketch.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::stream::{TurnstileStream, Update};

/// Bit tally of a sketch. Hash seeds are reported apart from counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceReport {
    pub counter_bits: u64,
    pub seed_bits: u64,
    pub auxiliary_bits: u64,
    pub total_bits: u64,
}

impl SpaceReport {
    pub fn new(counter_bits: u64, seed_bits: u64, auxiliary_bits: u64) -> Self {
        Self {
            counter_bits,
            seed_bits,
            auxiliary_bits,
            total_bits: counter_bits + seed_bits + auxiliary_bits,
        }
    }

    /// Parts added component-wise.
    pub fn combine(self, other: SpaceReport) -> Self {
        Self::new(
            self.counter_bits + other.counter_bits,
            self.seed_bits + other.seed_bits,
            self.auxiliary_bits + other.auxiliary_bits,
        )
    }
}

/// Bits needed to store a residue modulo `p`, i.e. `ceil(log2 p)`.
pub fn residue_bits(p: u64) -> u64 {
    if p <= 1 {
        0
    } else {
        64 - u64::from((p - 1).leading_zeros())
    }
}

/// Word size used for real-valued counters.
pub const REAL_WORD_BITS: u64 = 64;

/// A sketch whose state is a linear function of the frequency vector.
///
/// `update` panics if the index is outside the declared dimension.
pub trait LinearSketch {
    fn update(&mut self, u: Update);

    /// Adds the state of `other`, which must share parameters and seeds.
    fn merge(&mut self, other: &Self) -> Result<()>;

    fn space(&self) -> SpaceReport;

    fn feed(&mut self, stream: &TurnstileStream) {
        for u in stream.iter() {
            self.update(u);
        }
    }
}

/// An estimate together with its promised factor and success probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub value: f64,
    pub factor: f64,
    pub success_prob: f64,
    pub space: SpaceReport,
}

/// Median of a slice; the mean of the two middle values for even lengths.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    values.sort_by(|a, b| a.total_cmp(b));
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totals_add_up() {
        let r = SpaceReport::new(10, 5, 3);
        assert_eq!(r.total_bits, 18);
        let z = SpaceReport::new(0, 0, 7);
        assert_eq!(z.total_bits, z.auxiliary_bits);
        assert_eq!(r.combine(z), SpaceReport::new(10, 5, 10));
    }

    #[test]
    fn residue_bit_widths() {
        assert_eq!(residue_bits(2), 1);
        assert_eq!(residue_bits(3), 2);
        assert_eq!(residue_bits(65521), 16);
        assert_eq!(residue_bits(65537), 17);
    }

    #[test]
    fn median_odd_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
