//! VOC-style average precision at a fixed IoU threshold.
//!
//! Detections are matched greedily per frame and label in descending confidence:
//! each claims the highest-IoU still-unmatched ground truth if that IoU reaches
//! the threshold, otherwise it is a false positive.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::iou;
use crate::model::{canonical_order, Detection, DetectionDump, FrameKey, GroundTruthBox, VideoDataset};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    /// Area under the monotone precision envelope.
    #[default]
    AllPoint,
    /// Mean of the envelope sampled at recall 0.0, 0.1, ..., 1.0.
    Eleven,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub interpolation: Interpolation,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.5, interpolation: Interpolation::AllPoint }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iou_threshold > 0.0 && self.iou_threshold <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("iou_threshold must lie in (0, 1], got {}", self.iou_threshold)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FrameCounts {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Average precision for every label with at least one ground-truth box.
    pub per_label: BTreeMap<String, f64>,
    /// Unweighted mean of `per_label`; 0 when no label has ground truth.
    pub mean_ap: f64,
    /// Matching outcome per dataset frame, in dataset order.
    pub frames: Vec<(FrameKey, FrameCounts)>,
}

/// True-positive flag for each detection of one frame, in input order.
pub fn match_frame(dets: &[Detection], gts: &[GroundTruthBox], iou_threshold: f64) -> Vec<bool> {
    let mut claimed = vec![false; gts.len()];
    let mut tp = vec![false; dets.len()];
    for i in canonical_order(dets) {
        let d = &dets[i];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if claimed[g] || gt.label != d.label {
                continue;
            }
            let v = iou(&d.bbox, &gt.bbox);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, v)) = best {
            if v >= iou_threshold {
                claimed[g] = true;
                tp[i] = true;
            }
        }
    }
    tp
}

fn frame_counts(dets: &[Detection], gts: &[GroundTruthBox], iou_threshold: f64) -> FrameCounts {
    let tp = match_frame(dets, gts, iou_threshold).into_iter().filter(|&t| t).count();
    FrameCounts { true_positives: tp, false_positives: dets.len() - tp, false_negatives: gts.len() - tp }
}

/// Average precision from ranked true-positive flags (highest confidence first).
pub fn average_precision(ranked_tp: &[bool], n_gt: usize, interpolation: Interpolation) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut recall = Vec::with_capacity(ranked_tp.len());
    let mut precision = Vec::with_capacity(ranked_tp.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &hit in ranked_tp {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    match interpolation {
        Interpolation::AllPoint => {
            // Recall steps by exactly 1/n_gt at each true positive, so the area
            // under the envelope is the envelope summed at those ranks over n_gt.
            let mut envelope = precision.clone();
            for i in (0..envelope.len().saturating_sub(1)).rev() {
                envelope[i] = envelope[i].max(envelope[i + 1]);
            }
            let area: f64 = ranked_tp.iter().zip(&envelope).filter(|(hit, _)| **hit).map(|(_, p)| *p).sum();
            area / n_gt as f64
        }
        Interpolation::Eleven => {
            let mut sum = 0.0;
            for step in 0..=10 {
                let t = step as f64 / 10.0;
                let p = recall
                    .iter()
                    .zip(&precision)
                    .filter(|(r, _)| **r >= t)
                    .map(|(_, p)| *p)
                    .fold(0.0, f64::max);
                sum += p;
            }
            sum / 11.0
        }
    }
}

struct Ranked {
    confidence: f64,
    frame: usize,
    rank: usize,
    tp: bool,
}

/// Average precision per label and mAP of `dump` against `ds`.
///
/// Dataset frames missing from the dump count as having no detections; dump
/// frames missing from the dataset are a join error.
pub fn evaluate(ds: &VideoDataset, dump: &DetectionDump, cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let unknown = ds.unknown_keys(dump);
    if !unknown.is_empty() {
        return Err(Error::JoinMismatch(unknown));
    }

    let mut by_label: BTreeMap<&str, (Vec<Ranked>, usize)> = BTreeMap::new();
    let mut frames = Vec::with_capacity(ds.frame_count());
    for (fi, frame) in ds.frames().enumerate() {
        let dets: &[Detection] = dump.get(&frame.key).map(Vec::as_slice).unwrap_or(&[]);
        let tp = match_frame(dets, &frame.ground_truth, cfg.iou_threshold);
        for (rank, i) in canonical_order(dets).into_iter().enumerate() {
            by_label.entry(dets[i].label.as_str()).or_default().0.push(Ranked {
                confidence: dets[i].confidence,
                frame: fi,
                rank,
                tp: tp[i],
            });
        }
        for g in &frame.ground_truth {
            by_label.entry(g.label.as_str()).or_default().1 += 1;
        }
        let hits = tp.iter().filter(|&&t| t).count();
        frames.push((
            frame.key.clone(),
            FrameCounts {
                true_positives: hits,
                false_positives: dets.len() - hits,
                false_negatives: frame.ground_truth.len() - hits,
            },
        ));
    }

    let mut per_label = BTreeMap::new();
    for (label, (mut ranked, n_gt)) in by_label {
        if n_gt == 0 {
            continue;
        }
        ranked.sort_by(|a, b| {
            b.confidence
                .total_cmp(&a.confidence)
                .then(a.frame.cmp(&b.frame))
                .then(a.rank.cmp(&b.rank))
        });
        let flags: Vec<bool> = ranked.iter().map(|r| r.tp).collect();
        per_label.insert(String::from(label), average_precision(&flags, n_gt, cfg.interpolation));
    }
    let mean_ap = if per_label.is_empty() {
        0.0
    } else {
        per_label.values().sum::<f64>() / per_label.len() as f64
    };
    Ok(EvalReport { per_label, mean_ap, frames })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameDiffRow {
    pub key: FrameKey,
    pub a: FrameCounts,
    pub b: FrameCounts,
}

/// Side-by-side per-frame matching counts of two dumps over the same dataset.
pub fn frame_diff(ds: &VideoDataset, a: &DetectionDump, b: &DetectionDump, cfg: &EvalConfig) -> Result<Vec<FrameDiffRow>> {
    cfg.validate()?;
    let mut unknown = ds.unknown_keys(a);
    unknown.extend(ds.unknown_keys(b));
    if !unknown.is_empty() {
        return Err(Error::JoinMismatch(unknown));
    }
    let counts = |dump: &DetectionDump, key: &FrameKey, gts: &[GroundTruthBox]| {
        frame_counts(dump.get(key).map(Vec::as_slice).unwrap_or(&[]), gts, cfg.iou_threshold)
    };
    Ok(ds
        .frames()
        .map(|f| FrameDiffRow {
            key: f.key.clone(),
            a: counts(a, &f.key, &f.ground_truth),
            b: counts(b, &f.key, &f.ground_truth),
        })
        .collect())
}
