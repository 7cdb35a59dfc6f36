//! Independent reference implementations used as oracles. Nothing here calls
//! into the crate's matching, IoU or scoring code.
#![allow(dead_code)]

use odd_core::{BoundingBox, Detection, GroundTruthBox};
use rand::Rng;

pub const LABELS: [&str; 3] = ["cat", "dog", "car"];

fn raw_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
    inter / union
}

fn corners(b: &BoundingBox) -> [f64; 4] {
    [b.x1, b.y1, b.x2, b.y2]
}

pub struct NaiveConfig {
    pub t_near: f64,
    pub t_pos: f64,
    pub eps: f64,
    pub near: bool,
    pub multi: bool,
}

impl Default for NaiveConfig {
    fn default() -> Self {
        Self { t_near: 0.3, t_pos: 0.5, eps: 1e-6, near: true, multi: true }
    }
}

/// Straight transcription of the per-image difficulty procedure: loop over the
/// distinct labels, build the IoU matrix, bucket each prediction's confidence
/// into one of four lists, then combine precision and recall.
pub fn naive_odd(preds: &[Detection], gts: &[GroundTruthBox], cfg: &NaiveConfig) -> f64 {
    let mut pos_list = Vec::new();
    let mut near_list = Vec::new();
    let mut multi_list = Vec::new();
    let mut neg_list = Vec::new();

    let mut labels: Vec<&str> = Vec::new();
    for l in preds.iter().map(|p| p.label.as_str()).chain(gts.iter().map(|g| g.label.as_str())) {
        if !labels.contains(&l) {
            labels.push(l);
        }
    }

    for l in labels {
        let mut pred_l: Vec<&Detection> = preds.iter().filter(|p| p.label == l).collect();
        pred_l.sort_by(|a, b| b.confidence.partial_cmp(&a.confidence).unwrap());
        let gt_l: Vec<&GroundTruthBox> = gts.iter().filter(|g| g.label == l).collect();
        let iou_l: Vec<Vec<f64>> = pred_l
            .iter()
            .map(|p| gt_l.iter().map(|g| raw_iou(corners(&p.bbox), corners(&g.bbox))).collect())
            .collect();

        for i in 0..pred_l.len() {
            let weight = pred_l[i].confidence;
            let mut is_max = false;
            for j in 0..gt_l.len() {
                let mut arg = 0;
                for k in 1..pred_l.len() {
                    if iou_l[k][j] > iou_l[arg][j] {
                        arg = k;
                    }
                }
                if arg == i && iou_l[i][j] >= cfg.t_pos {
                    is_max = true;
                }
            }
            let best = iou_l[i].iter().cloned().fold(0.0, f64::max);
            if is_max {
                pos_list.push(weight);
            } else if best >= cfg.t_pos && cfg.multi {
                multi_list.push(weight);
            } else if best >= cfg.t_near && best < cfg.t_pos && cfg.near {
                near_list.push(weight);
            } else {
                neg_list.push(weight);
            }
        }
    }

    let ws1: f64 = pos_list.iter().sum::<f64>() + 0.5 * near_list.iter().sum::<f64>() + multi_list.iter().sum::<f64>();
    let ws0: f64 = neg_list.iter().sum();
    let total_gt = gts.len() as f64;
    let (wp, wr) = if gts.is_empty() {
        (1.0, 1.0)
    } else {
        let wp = if ws1 + ws0 == 0.0 { 0.0 } else { ws1 / (ws1 + ws0) };
        (wp, ws1 / total_gt.max(ws1))
    };
    1.0 - 2.0 * (wp * wr) / (wp + wr + cfg.eps)
}

pub fn random_box<R: Rng>(rng: &mut R) -> BoundingBox {
    let x = rng.random_range(0.0..90.0);
    let y = rng.random_range(0.0..90.0);
    let w = rng.random_range(2.0..40.0);
    let h = rng.random_range(2.0..40.0);
    BoundingBox::new(x, y, x + w, y + h).unwrap()
}

/// Shifts and rescales a box by up to `amount` of its size, giving IoUs that
/// spread across the positive, near-positive and negative bands.
pub fn jitter<R: Rng>(rng: &mut R, b: &BoundingBox, amount: f64) -> BoundingBox {
    let (w, h) = (b.width(), b.height());
    let dx = rng.random_range(-amount..=amount) * w;
    let dy = rng.random_range(-amount..=amount) * h;
    let sw = 1.0 + rng.random_range(-amount..=amount);
    let sh = 1.0 + rng.random_range(-amount..=amount);
    let x1 = b.x1 + dx;
    let y1 = b.y1 + dy;
    BoundingBox::new(x1, y1, x1 + (w * sw).max(0.5), y1 + (h * sh).max(0.5)).unwrap()
}

pub fn random_label<R: Rng>(rng: &mut R) -> &'static str {
    LABELS[rng.random_range(0..LABELS.len())]
}

/// A frame with up to `max_boxes` boxes in total across ground truth and predictions.
pub fn random_frame<R: Rng>(rng: &mut R, max_boxes: usize) -> (Vec<Detection>, Vec<GroundTruthBox>) {
    let n_gt = rng.random_range(0..=max_boxes.min(5));
    let gts: Vec<GroundTruthBox> =
        (0..n_gt).map(|_| GroundTruthBox::new(random_box(rng), random_label(rng))).collect();
    let n_pred = rng.random_range(0..=max_boxes - n_gt);
    let preds = (0..n_pred)
        .map(|_| {
            let confidence = rng.random_range(0.01..=1.0);
            if !gts.is_empty() && rng.random_bool(0.75) {
                let g = &gts[rng.random_range(0..gts.len())];
                let label = if rng.random_bool(0.9) { g.label.as_str() } else { random_label(rng) };
                let amount = [0.05, 0.2, 0.4][rng.random_range(0..3)];
                Detection::new(jitter(rng, &g.bbox, amount), label, confidence)
            } else {
                Detection::new(random_box(rng), random_label(rng), confidence)
            }
        })
        .collect();
    (preds, gts)
}

/// Interpolated-precision AP the classical way: integrate the precision
/// envelope over the distinct recall breakpoints.
pub fn brute_force_ap(ranked_tp: &[bool], n_gt: usize) -> f64 {
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0.0, 0.0);
    for &hit in ranked_tp {
        if hit { tp += 1.0 } else { fp += 1.0 }
        points.push((tp / n_gt as f64, tp / (tp + fp)));
    }
    let mut recalls: Vec<f64> = points.iter().map(|p| p.0).collect();
    recalls.push(0.0);
    recalls.sort_by(|a, b| a.partial_cmp(b).unwrap());
    recalls.dedup();
    let interp = |r: f64| points.iter().filter(|p| p.0 >= r).map(|p| p.1).fold(0.0, f64::max);
    recalls.windows(2).map(|w| (w[1] - w[0]) * interp(w[1])).sum()
}
