//! Arithmetic behind threshold sweeps: lossless acceleration rate, routed
//! proportions and distribution summaries.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Threshold grid, highest first.
pub const DEFAULT_THRESHOLDS: [f64; 12] = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.25, 0.2, 0.15, 0.1, 0.05];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub mean_ap: f64,
    pub fps: f64,
}

impl RatePoint {
    pub fn new(mean_ap: f64, fps: f64) -> Self {
        Self { mean_ap, fps }
    }
}

/// Largest relative speed-up, in percent, among rows whose accuracy is not below
/// the baseline. `Ok(None)` when `rows` is empty or no row is lossless.
pub fn lossless_rate(rows: &[RatePoint], baseline: RatePoint) -> Result<Option<f64>> {
    if !(baseline.fps > 0.0) {
        return Err(Error::InvalidConfig(format!("baseline fps must be positive, got {}", baseline.fps)));
    }
    Ok(rows
        .iter()
        .filter(|r| r.mean_ap >= baseline.mean_ap)
        .map(|r| (r.fps - baseline.fps) / baseline.fps * 100.0)
        .reduce(f64::max))
}

/// Fraction of scores strictly below `threshold`, i.e. routed to the fast detector.
pub fn proportion_below(scores: &[f64], threshold: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("compute a proportion of"));
    }
    Ok(scores.iter().filter(|&&s| s < threshold).count() as f64 / scores.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::Empty("summarize"));
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Summary {
        count: sorted.len(),
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        min: sorted[0],
        q25: quantile(&sorted, 0.25),
        median: quantile(&sorted, 0.5),
        q75: quantile(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    })
}
