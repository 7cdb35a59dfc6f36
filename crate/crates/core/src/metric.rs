//! Image-level object detection difficulty.
//!
//! Each predicted box on a frame is assigned one [`MatchCategory`] by comparing
//! it with same-label ground truth. Confidence-weighted sums over the categories
//! give a weighted precision and recall, and the difficulty is one minus their
//! (epsilon-guarded) harmonic mean: 0 for a perfectly detected frame, 1 when
//! nothing useful was detected.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::iou;
use crate::model::{canonical_order, Detection, DetectionDump, FrameKey, GroundTruthBox, ScoreTable, VideoDataset};
use crate::{Error, Result};

/// Factor applied to the predicted score before comparing it with the
/// ground-truth score in [`odd_loss`].
pub const PREDICTION_SCALE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricConfig {
    /// Lower IoU bound of the near-positive band.
    pub t_near: f64,
    /// IoU at or above which a same-label match counts as positive.
    pub t_pos: f64,
    /// Guard added to the harmonic-mean denominator.
    pub epsilon: f64,
    /// When off, near-positive candidates are counted as negatives.
    pub use_near_positive: bool,
    /// When off, multi-positive candidates are counted as negatives.
    pub use_multi_positive: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self { t_near: 0.3, t_pos: 0.5, epsilon: 1e-6, use_near_positive: true, use_multi_positive: true }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_near > 0.0 && self.t_near < self.t_pos && self.t_pos <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "thresholds must satisfy 0 < t_near < t_pos <= 1 (got t_near={}, t_pos={})",
                self.t_near, self.t_pos
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1e-3) {
            return Err(Error::InvalidConfig(format!("epsilon must lie in (0, 1e-3), got {}", self.epsilon)));
        }
        Ok(())
    }

    pub fn with_toggles(self, use_near_positive: bool, use_multi_positive: bool) -> Self {
        Self { use_near_positive, use_multi_positive, ..self }
    }

    /// The four category-toggle combinations, named after the categories they enable.
    pub fn ablation_variants(self) -> [(&'static str, MetricConfig); 4] {
        [
            ("positive+negative", self.with_toggles(false, false)),
            ("+near-positive", self.with_toggles(true, false)),
            ("+multi-positive", self.with_toggles(false, true)),
            ("+near-positive+multi-positive", self.with_toggles(true, true)),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatchCategory {
    /// Highest-IoU prediction for some ground truth, with IoU >= `t_pos`.
    Positive,
    /// Best IoU in `[t_near, t_pos)`.
    NearPositive,
    /// Best IoU >= `t_pos` but not elected by any ground truth.
    MultiPositive,
    Negative,
}

impl MatchCategory {
    /// Weight of this category on the positive side of the weighted sample.
    fn positive_weight(self) -> f64 {
        match self {
            MatchCategory::Positive | MatchCategory::MultiPositive => 1.0,
            MatchCategory::NearPositive => 0.5,
            MatchCategory::Negative => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategorizedDetection {
    pub detection: Detection,
    pub category: MatchCategory,
    /// Highest IoU with any same-label ground truth; 0 if there is none.
    pub best_iou: f64,
    /// Index into the ground-truth list of the (lowest-index) ground truth that
    /// elected this prediction. Set only for [`MatchCategory::Positive`].
    pub matched_gt_index: Option<usize>,
}

/// Which side of the weighted sample to accumulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleSide {
    /// Positive, near-positive (half weight) and multi-positive detections.
    Positive,
    /// Negative detections.
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OddScore {
    pub value: f64,
    pub wp: f64,
    pub wr: f64,
}

/// Categorizes predictions, returned in canonical order (descending confidence,
/// then content). Sums over this order do not depend on input order.
fn categorize_canonical(preds: &[Detection], gts: &[GroundTruthBox], cfg: &MetricConfig) -> Vec<CategorizedDetection> {
    let order = canonical_order(preds);
    let ranked: Vec<&Detection> = order.iter().map(|&i| &preds[i]).collect();

    // label -> (prediction ranks, ground-truth indices)
    let mut groups: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (rank, d) in ranked.iter().enumerate() {
        groups.entry(d.label.as_str()).or_default().0.push(rank);
    }
    for (g, gt) in gts.iter().enumerate() {
        groups.entry(gt.label.as_str()).or_default().1.push(g);
    }

    let mut best_iou = vec![0.0f64; ranked.len()];
    let mut elected_by: Vec<Option<usize>> = vec![None; ranked.len()];

    for (pred_ranks, gt_indices) in groups.values() {
        if pred_ranks.is_empty() || gt_indices.is_empty() {
            continue;
        }
        // row per ground truth, column per prediction
        let matrix: Vec<Vec<f64>> = gt_indices
            .iter()
            .map(|&g| pred_ranks.iter().map(|&r| iou(&ranked[r].bbox, &gts[g].bbox)).collect())
            .collect();

        for (row, &g) in matrix.iter().zip(gt_indices) {
            let mut winner: Option<(usize, f64)> = None;
            for (col, &v) in row.iter().enumerate() {
                if winner.is_none_or(|(_, w)| v > w) {
                    winner = Some((col, v));
                }
            }
            if let Some((col, v)) = winner {
                if v >= cfg.t_pos {
                    let r = pred_ranks[col];
                    elected_by[r].get_or_insert(g);
                }
            }
        }
        for (col, &r) in pred_ranks.iter().enumerate() {
            best_iou[r] = matrix.iter().map(|row| row[col]).fold(0.0, f64::max);
        }
    }

    ranked
        .into_iter()
        .enumerate()
        .map(|(r, d)| {
            let best = best_iou[r];
            let category = if elected_by[r].is_some() {
                MatchCategory::Positive
            } else if best >= cfg.t_pos {
                if cfg.use_multi_positive { MatchCategory::MultiPositive } else { MatchCategory::Negative }
            } else if best >= cfg.t_near {
                if cfg.use_near_positive { MatchCategory::NearPositive } else { MatchCategory::Negative }
            } else {
                MatchCategory::Negative
            };
            CategorizedDetection { detection: d.clone(), category, best_iou: best, matched_gt_index: elected_by[r] }
        })
        .collect()
}

/// Assigns every prediction exactly one category. Output follows input order.
///
/// Matching is per label: cross-label IoU is never considered. For each ground
/// truth the highest-IoU prediction (ties to the earlier prediction in canonical
/// order) is elected positive if its IoU reaches `t_pos`.
pub fn categorize(preds: &[Detection], gts: &[GroundTruthBox], cfg: &MetricConfig) -> Vec<CategorizedDetection> {
    let order = canonical_order(preds);
    let mut slots: Vec<Option<CategorizedDetection>> = vec![None; preds.len()];
    for (cat, &input) in categorize_canonical(preds, gts, cfg).into_iter().zip(&order) {
        slots[input] = Some(cat);
    }
    slots.into_iter().map(|c| c.expect("every prediction categorized")).collect()
}

/// Confidence-weighted sample count for one side. Near-positives count half.
pub fn weighted_samples(cats: &[CategorizedDetection], side: SampleSide) -> f64 {
    cats.iter()
        .map(|c| {
            let weight = match side {
                SampleSide::Positive => c.category.positive_weight(),
                SampleSide::Negative if c.category == MatchCategory::Negative => 1.0,
                SampleSide::Negative => 0.0,
            };
            weight * c.detection.confidence
        })
        .sum()
}

/// 1 on frames without ground truth; 0 when there are no weighted samples at all.
pub fn weighted_precision(ws_pos: f64, ws_neg: f64, has_gt: bool) -> f64 {
    if !has_gt {
        return 1.0;
    }
    let total = ws_pos + ws_neg;
    if total == 0.0 {
        0.0
    } else {
        ws_pos / total
    }
}

/// `ws_pos / max(total_gt, ws_pos)`, or 1 on frames without ground truth.
pub fn weighted_recall(ws_pos: f64, total_gt: usize) -> f64 {
    if total_gt == 0 {
        return 1.0;
    }
    ws_pos / (total_gt as f64).max(ws_pos)
}

fn combine(wp: f64, wr: f64, epsilon: f64) -> f64 {
    // 1 - 2 wp wr / (wp + wr + eps), rearranged over a common denominator so the
    // perfect frame gives exactly eps / (2 + eps) and the empty one exactly 1.
    let numerator = (wp + wr - 2.0 * wp * wr) + epsilon;
    numerator / (wp + wr + epsilon)
}

/// Difficulty of one frame given its predictions and ground truth.
pub fn odd_score(preds: &[Detection], gts: &[GroundTruthBox], cfg: &MetricConfig) -> OddScore {
    let cats = categorize_canonical(preds, gts, cfg);
    let ws_pos = weighted_samples(&cats, SampleSide::Positive);
    let ws_neg = weighted_samples(&cats, SampleSide::Negative);
    let wp = weighted_precision(ws_pos, ws_neg, !gts.is_empty());
    let wr = weighted_recall(ws_pos, gts.len());
    OddScore { value: combine(wp, wr, cfg.epsilon), wp, wr }
}

/// Smooth-L1 of `z`.
pub fn smooth_l1(z: f64) -> f64 {
    let a = if z < 0.0 { -z } else { z };
    if a < 1.0 {
        0.5 * z * z
    } else {
        a - 0.5
    }
}

/// Regression loss of a predicted score against a ground-truth score, with the
/// prediction magnified by [`PREDICTION_SCALE`].
pub fn odd_loss(gt_score: f64, predicted: f64) -> f64 {
    smooth_l1(gt_score - PREDICTION_SCALE * predicted)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelOutcome {
    /// One score per dataset frame, in dataset order.
    pub scores: ScoreTable,
    /// Dataset frames absent from the dump, scored as having no detections.
    pub missing: Vec<FrameKey>,
}

/// Ground-truth difficulty for every frame of `ds` from the detections in `dump`.
pub fn label_dataset(ds: &VideoDataset, dump: &DetectionDump, cfg: &MetricConfig) -> Result<LabelOutcome> {
    cfg.validate()?;
    let unknown = ds.unknown_keys(dump);
    if !unknown.is_empty() {
        return Err(Error::JoinMismatch(unknown));
    }
    let mut scores = ScoreTable::new();
    let mut missing = Vec::new();
    for frame in ds.frames() {
        let preds: &[Detection] = match dump.get(&frame.key) {
            Some(d) => d,
            None => {
                missing.push(frame.key.clone());
                &[]
            }
        };
        scores.insert(frame.key.clone(), odd_score(preds, &frame.ground_truth, cfg).value);
    }
    Ok(LabelOutcome { scores, missing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;
    use crate::model::fixtures::{bb, frame, two_videos};
    use crate::model::Video;

    const EPS: f64 = 1e-6;

    fn gt(label: &str, b: BoundingBox) -> GroundTruthBox {
        GroundTruthBox::new(b, label)
    }

    fn det(label: &str, b: BoundingBox, c: f64) -> Detection {
        Detection::new(b, label, c)
    }

    // Box of width w starting at x against the unit-height ground truth (0,0,1,1):
    // IoU = w / 1 when nested. Picks w to hit an exact IoU.
    fn with_iou(v: f64) -> BoundingBox {
        bb(0.0, 0.0, v, 1.0)
    }

    fn unit() -> BoundingBox {
        bb(0.0, 0.0, 1.0, 1.0)
    }

    fn cats(preds: &[Detection], gts: &[GroundTruthBox]) -> Vec<MatchCategory> {
        categorize(preds, gts, &MetricConfig::default()).into_iter().map(|c| c.category).collect()
    }

    #[test]
    fn single_good_match_is_positive() {
        assert_eq!(cats(&[det("cat", with_iou(0.9), 0.7)], &[gt("cat", unit())]), [MatchCategory::Positive]);
    }

    #[test]
    fn second_overlapping_match_is_multi_positive() {
        let preds = [det("cat", with_iou(0.9), 0.5), det("cat", with_iou(0.6), 0.9)];
        let out = categorize(&preds, &[gt("cat", unit())], &MetricConfig::default());
        assert_eq!(out[0].category, MatchCategory::Positive);
        assert_eq!(out[0].matched_gt_index, Some(0));
        assert_eq!(out[1].category, MatchCategory::MultiPositive);
        assert_eq!(out[1].matched_gt_index, None);
    }

    #[test]
    fn just_below_positive_threshold_is_near_positive() {
        assert_eq!(cats(&[det("cat", with_iou(0.49), 1.0)], &[gt("cat", unit())]), [MatchCategory::NearPositive]);
    }

    #[test]
    fn label_mismatch_is_negative() {
        assert_eq!(cats(&[det("dog", with_iou(0.9), 1.0)], &[gt("cat", unit())]), [MatchCategory::Negative]);
    }

    #[test]
    fn threshold_boundaries_are_inclusive() {
        let g = [gt("cat", unit())];
        assert_eq!(cats(&[det("cat", with_iou(0.5), 1.0)], &g), [MatchCategory::Positive]);
        // 0.25 is exact in binary; 0.3 is not
        let cfg = MetricConfig { t_near: 0.25, ..Default::default() };
        let at_near = categorize(&[det("cat", with_iou(0.25), 1.0)], &g, &cfg);
        assert_eq!(at_near[0].category, MatchCategory::NearPositive);
        assert_eq!(cats(&[det("cat", with_iou(0.29), 1.0)], &g), [MatchCategory::Negative]);
    }

    #[test]
    fn toggles_demote_to_negative() {
        let preds = [det("cat", with_iou(0.9), 1.0), det("cat", with_iou(0.8), 1.0), det("cat", with_iou(0.4), 1.0)];
        let cfg = MetricConfig::default().with_toggles(false, false);
        let got: Vec<_> = categorize(&preds, &[gt("cat", unit())], &cfg).into_iter().map(|c| c.category).collect();
        assert_eq!(got, [MatchCategory::Positive, MatchCategory::Negative, MatchCategory::Negative]);
    }

    #[test]
    fn one_prediction_elected_twice_counts_once() {
        let gts = [gt("cat", unit()), gt("cat", bb(0.0, 0.0, 1.0, 0.95))];
        let preds = [det("cat", unit(), 1.0)];
        let out = categorize(&preds, &gts, &MetricConfig::default());
        assert_eq!(out[0].category, MatchCategory::Positive);
        assert_eq!(out[0].matched_gt_index, Some(0));
        assert_eq!(weighted_samples(&out, SampleSide::Positive), 1.0);
    }

    #[test]
    fn empty_inputs_give_empty_output() {
        assert!(categorize(&[], &[], &MetricConfig::default()).is_empty());
        assert!(categorize(&[], &[gt("cat", unit())], &MetricConfig::default()).is_empty());
    }

    #[test]
    fn weighted_sample_examples() {
        let c = |category, confidence| CategorizedDetection {
            detection: det("cat", unit(), confidence),
            category,
            best_iou: 0.0,
            matched_gt_index: None,
        };
        assert_eq!(weighted_samples(&[c(MatchCategory::Positive, 1.0)], SampleSide::Positive), 1.0);
        assert_eq!(weighted_samples(&[c(MatchCategory::NearPositive, 1.0)], SampleSide::Positive), 0.5);
        let mixed = [c(MatchCategory::Positive, 0.8), c(MatchCategory::Negative, 0.6)];
        assert_eq!(weighted_samples(&mixed, SampleSide::Negative), 0.6);
        assert_eq!(weighted_samples(&mixed, SampleSide::Positive), 0.8);
    }

    #[test]
    fn precision_and_recall_examples() {
        assert_eq!(weighted_precision(1.0, 0.0, true), 1.0);
        assert_eq!(weighted_precision(1.0, 1.0, true), 0.5);
        assert_eq!(weighted_precision(0.3, 0.0, false), 1.0);
        assert_eq!(weighted_precision(0.0, 0.0, true), 0.0);
        assert_eq!(weighted_recall(0.8, 1), 0.8);
        assert_eq!(weighted_recall(3.5, 2), 1.0);
        assert_eq!(weighted_recall(0.0, 0), 1.0);
    }

    #[test]
    fn score_spot_values() {
        let cfg = MetricConfig::default();
        let g = [gt("cat", unit())];
        let empty = odd_score(&[], &[], &cfg);
        assert_eq!(empty.value, EPS / (2.0 + EPS));

        let perfect = odd_score(&[det("cat", unit(), 1.0)], &g, &cfg);
        assert_eq!(perfect.value, EPS / (2.0 + EPS));

        let soft = odd_score(&[det("cat", unit(), 0.8)], &g, &cfg);
        assert!((soft.value - (1.0 - 1.6 / (1.8 + EPS))).abs() < 1e-12);
        assert!((soft.value - 0.1111).abs() < 1e-4);

        let near = odd_score(&[det("cat", with_iou(0.4), 1.0)], &g, &cfg);
        assert_eq!((near.wp, near.wr), (1.0, 0.5));
        assert!((near.value - (1.0 - 1.0 / (1.5 + EPS))).abs() < 1e-12);

        let fp = odd_score(&[det("cat", unit(), 1.0), det("cat", bb(5.0, 5.0, 6.0, 6.0), 1.0)], &g, &cfg);
        assert_eq!((fp.wp, fp.wr), (0.5, 1.0));
        assert!((fp.value - (1.0 - 1.0 / (1.5 + EPS))).abs() < 1e-12);

        assert_eq!(odd_score(&[], &g, &cfg).value, 1.0);
    }

    #[test]
    fn loss_examples() {
        assert_eq!(smooth_l1(0.0), 0.0);
        assert_eq!(smooth_l1(0.5), 0.125);
        assert_eq!(smooth_l1(2.0), 1.5);
        assert_eq!(smooth_l1(-2.0), 1.5);
        assert_eq!(odd_loss(0.5, 0.05), 0.0);
        assert_eq!(odd_loss(1.0, 0.0), 0.5);
    }

    #[test]
    fn config_validation() {
        assert!(MetricConfig::default().validate().is_ok());
        assert!(MetricConfig { t_near: 0.5, ..Default::default() }.validate().is_err());
        assert!(MetricConfig { t_pos: 1.2, ..Default::default() }.validate().is_err());
        assert!(MetricConfig { epsilon: 0.0, ..Default::default() }.validate().is_err());
        assert!(MetricConfig { epsilon: 1e-3, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn labeling_perfect_frames_and_missing_frames() {
        let ds = two_videos();
        let mut dump = DetectionDump::new();
        for f in ds.frames().take(1) {
            let dets = f.ground_truth.iter().map(|g| det(&g.label, g.bbox, 1.0)).collect();
            dump.insert(f.key.clone(), dets);
        }
        let out = label_dataset(&ds, &dump, &MetricConfig::default()).unwrap();
        let scores: Vec<f64> = out.scores.values().copied().collect();
        // a#0 perfect, a#1 has no gt and no dump entry, b#3 has gt and nothing detected
        assert_eq!(scores, [EPS / (2.0 + EPS), EPS / (2.0 + EPS), 1.0]);
        assert_eq!(out.missing, [FrameKey::new("a", 1), FrameKey::new("b", 3)]);
    }

    #[test]
    fn labeling_rejects_unknown_frames() {
        let ds = two_videos();
        let mut dump = DetectionDump::new();
        dump.insert(FrameKey::new("nope", 0), vec![]);
        assert!(matches!(label_dataset(&ds, &dump, &MetricConfig::default()), Err(Error::JoinMismatch(_))));
    }

    #[test]
    fn labeling_two_perfect_frames() {
        let ds = VideoDataset {
            videos: vec![Video {
                id: "v".into(),
                frames: vec![frame("v", 0, vec![gt("cat", unit())]), frame("v", 1, vec![gt("dog", unit())])],
            }],
        };
        let dump: DetectionDump = ds
            .frames()
            .map(|f| (f.key.clone(), f.ground_truth.iter().map(|g| det(&g.label, g.bbox, 1.0)).collect()))
            .collect();
        let out = label_dataset(&ds, &dump, &MetricConfig::default()).unwrap();
        assert!(out.scores.values().all(|&s| s < 1e-6));
        assert!(out.missing.is_empty());
    }
}
