//! Image-level object detection difficulty (ODD) scoring and the pure pieces of
//! a hybrid fast/slow detector pipeline.
//!
//! Everything in this crate is allocation-only and free of IO so it can run in
//! `no_std` environments. File formats, detector backends and the command line
//! live in the `odd-harness` crate.
//!
//! - [`geometry`]: corner-format boxes and IoU.
//! - [`model`]: detections, ground truth, frames, datasets and frame-keyed maps.
//! - [`metric`]: detection categorization, weighted precision/recall and the
//!   difficulty score itself.
//! - [`eval`]: VOC-style average precision.
//! - [`schedule`]: threshold routing and the per-frame cost model.
//! - [`pool`]: lowest-difficulty reference frame selection.
//! - [`sweep`]: lossless acceleration rate, proportions and summary statistics.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;
pub mod eval;
pub mod geometry;
pub mod metric;
pub mod model;
pub mod pool;
pub mod schedule;
pub mod sweep;

pub use error::{Error, Result};
pub use eval::{evaluate, frame_diff, EvalConfig, EvalReport, FrameCounts, FrameDiffRow, Interpolation};
pub use geometry::{iou, BoundingBox};
pub use metric::{
    categorize, label_dataset, odd_loss, odd_score, weighted_precision, weighted_recall,
    weighted_samples, CategorizedDetection, LabelOutcome, MatchCategory, MetricConfig, OddScore,
    SampleSide,
};
pub use model::{
    validate_dataset, validate_dump, Detection, DetectionDump, FrameKey, FrameMap, FrameRecord,
    GroundTruthBox, ScoreTable, Video, VideoDataset, Violation,
};
pub use pool::{select_pool, GlobalPool, PoolConfig};
pub use schedule::{decide, model_speed, route_for, CostModel, Route, ScheduleDecision, SpeedEstimate};
pub use sweep::{lossless_rate, proportion_below, summarize, RatePoint, Summary, DEFAULT_THRESHOLDS};
