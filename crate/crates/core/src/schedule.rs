//! Threshold routing between the fast still-image detector and the slow video
//! detector, and the per-frame cost model used to estimate throughput.

use alloc::format;
use alloc::vec::Vec;

use crate::model::{FrameKey, ScoreTable, VideoDataset};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Route {
    /// Still-image detector (fast path).
    Siod,
    /// Video detector (slow path).
    Vod,
}

impl Route {
    pub fn as_str(self) -> &'static str {
        match self {
            Route::Siod => "siod",
            Route::Vod => "vod",
        }
    }
}

/// Frames strictly below the threshold are easy and go to the fast detector;
/// a score equal to the threshold goes to the video detector.
pub fn route_for(score: f64, threshold: f64) -> Route {
    if score < threshold {
        Route::Siod
    } else {
        Route::Vod
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleDecision {
    pub key: FrameKey,
    pub score: f64,
    pub route: Route,
}

/// Routes every frame of `ds`, in dataset order.
pub fn decide(ds: &VideoDataset, scores: &ScoreTable, threshold: f64) -> Result<Vec<ScheduleDecision>> {
    if threshold.is_nan() {
        return Err(Error::InvalidConfig(format!("threshold must be a number, got {threshold}")));
    }
    ds.frames()
        .map(|f| {
            let score = *scores.get(&f.key).ok_or_else(|| Error::MissingScore(f.key.clone()))?;
            Ok(ScheduleDecision { key: f.key.clone(), score, route: route_for(score, threshold) })
        })
        .collect()
}

/// Per-frame cost of each pipeline stage, in any consistent unit.
///
/// The defaults are GFLOPs: a ResNet-50 Faster R-CNN with the difficulty head,
/// a SELSA video detector, and the difficulty head alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub siod_cost: f64,
    pub vod_cost: f64,
    pub score_cost: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self { siod_cost: 131.63, vod_cost: 324.2, score_cost: 0.13 }
    }
}

impl CostModel {
    pub fn new(siod_cost: f64, vod_cost: f64, score_cost: f64) -> Result<Self> {
        let cm = Self { siod_cost, vod_cost, score_cost };
        cm.validate()?;
        Ok(cm)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.siod_cost) || !positive(self.vod_cost) {
            return Err(Error::InvalidConfig(format!(
                "detector costs must be positive (siod={}, vod={})",
                self.siod_cost, self.vod_cost
            )));
        }
        if !(self.score_cost.is_finite() && self.score_cost >= 0.0) {
            return Err(Error::InvalidConfig(format!("score cost must be non-negative, got {}", self.score_cost)));
        }
        Ok(())
    }

    /// The fast path is not cheaper than the slow one. Allowed, but usually a
    /// configuration mistake.
    pub fn is_inverted(&self) -> bool {
        self.vod_cost < self.siod_cost
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedEstimate {
    pub n_siod: usize,
    pub n_vod: usize,
    pub total_cost: f64,
    /// Frames per unit cost; frames per second when costs are in seconds.
    pub fps: f64,
}

impl SpeedEstimate {
    pub fn proportion_siod(&self) -> f64 {
        self.n_siod as f64 / (self.n_siod + self.n_vod) as f64
    }
}

/// Every frame pays the scoring cost plus the cost of the detector it was routed to.
pub fn model_speed(decisions: &[ScheduleDecision], cm: &CostModel) -> Result<SpeedEstimate> {
    cm.validate()?;
    if decisions.is_empty() {
        return Err(Error::Empty("model speed for"));
    }
    let n_siod = decisions.iter().filter(|d| d.route == Route::Siod).count();
    let n_vod = decisions.len() - n_siod;
    let n = decisions.len() as f64;
    let total_cost = n * cm.score_cost + n_siod as f64 * cm.siod_cost + n_vod as f64 * cm.vod_cost;
    Ok(SpeedEstimate { n_siod, n_vod, total_cost, fps: n / total_cost })
}
