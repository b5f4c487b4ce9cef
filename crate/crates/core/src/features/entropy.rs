//! Non-Shannon histogram entropies: Renyi, Kapur and Yager.
//!
//! All three act on the normalized 256-bin intensity histogram of a mode and
//! are symmetric in the bins. Zero-probability bins contribute nothing to the
//! power sums.

use super::{quantize_256, FeatureError, YagerDenominator};
use crate::grid::Grid2;

/// Number of gray levels / histogram bins (X).
pub const BIN_COUNT: usize = 256;

/// Normalized 256-bin intensity histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    bins: Vec<f64>,
    source_pixels: usize,
}

impl Histogram {
    /// Wraps explicit bin probabilities; they must be non-negative and sum to
    /// one within 1e-12. Shorter inputs are zero-padded to 256 bins.
    pub fn from_probabilities(
        mut bins: Vec<f64>,
        source_pixels: usize,
    ) -> Result<Self, FeatureError> {
        if bins.len() > BIN_COUNT {
            return Err(FeatureError::BadOrder(format!(
                "histogram has {} bins, max {BIN_COUNT}",
                bins.len()
            )));
        }
        bins.resize(BIN_COUNT, 0.0);
        if bins.iter().any(|&q| !(q >= 0.0) || !q.is_finite()) {
            return Err(FeatureError::BadOrder(
                "histogram bins must be finite and non-negative".into(),
            ));
        }
        let total: f64 = bins.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(FeatureError::BadOrder(format!(
                "histogram sums to {total}, expected 1"
            )));
        }
        Ok(Self {
            bins,
            source_pixels,
        })
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn source_pixels(&self) -> usize {
        self.source_pixels
    }
}

/// Builds the histogram of a mode: values are min-max rescaled to the 256
/// gray levels (a constant mode lands entirely in bin 0) and counts are
/// normalized by the pixel count.
pub fn intensity_histogram(grid: &Grid2) -> Histogram {
    let levels = quantize_256(grid);
    let mut counts = [0usize; BIN_COUNT];
    for &l in &levels {
        counts[l as usize] += 1;
    }
    let n = levels.len() as f64;
    let bins = counts.iter().map(|&c| c as f64 / n).collect();
    Histogram {
        bins,
        source_pixels: levels.len(),
    }
}

/// Renyi entropy of order `a`: `(1/(1-a)) · log2(Σ q^a)`.
pub fn renyi_entropy(hist: &Histogram, a: f64) -> Result<f64, FeatureError> {
    if !(a > 0.0) || a == 1.0 {
        return Err(FeatureError::BadOrder(format!(
            "renyi order a = {a} must be positive and != 1"
        )));
    }
    let sum: f64 = hist
        .bins
        .iter()
        .filter(|&&q| q > 0.0)
        .map(|&q| q.powf(a))
        .sum();
    Ok(sum.log2() / (1.0 - a))
}

/// Kapur entropy of orders `(a, b)`: `(1/(b-a)) · log2(Σ q^a / Σ q^b)`.
pub fn kapur_entropy(hist: &Histogram, a: f64, b: f64) -> Result<f64, FeatureError> {
    if !(a > 0.0) || !(b > 0.0) || a == b {
        return Err(FeatureError::BadOrder(format!(
            "kapur orders (a, b) = ({a}, {b}) must be positive and distinct"
        )));
    }
    let sum_a: f64 = hist
        .bins
        .iter()
        .filter(|&&q| q > 0.0)
        .map(|&q| q.powf(a))
        .sum();
    let sum_b: f64 = hist
        .bins
        .iter()
        .filter(|&&q| q > 0.0)
        .map(|&q| q.powf(b))
        .sum();
    Ok((sum_a / sum_b).log2() / (b - a))
}

/// Yager entropy: `1 - Σ|2q - 1| / D` where `D` is the bin count (default
/// reading) or the source pixel count.
pub fn yager_entropy(hist: &Histogram, denominator: YagerDenominator) -> f64 {
    let sum: f64 = hist.bins.iter().map(|&q| (2.0 * q - 1.0).abs()).sum();
    let d = match denominator {
        YagerDenominator::Bins => BIN_COUNT as f64,
        YagerDenominator::Pixels => hist.source_pixels as f64,
    };
    1.0 - sum / d
}
