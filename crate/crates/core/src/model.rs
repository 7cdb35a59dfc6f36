//! Detections, ground truth and the frame-keyed containers shared by every module.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::geometry::BoundingBox;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub label: String,
    pub confidence: f64,
}

impl Detection {
    pub fn new(bbox: BoundingBox, label: impl Into<String>, confidence: f64) -> Self {
        Self { bbox, label: label.into(), confidence }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthBox {
    pub bbox: BoundingBox,
    pub label: String,
}

impl GroundTruthBox {
    pub fn new(bbox: BoundingBox, label: impl Into<String>) -> Self {
        Self { bbox, label: label.into() }
    }
}

/// Position of a frame within a dataset: video id plus frame index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FrameKey {
    pub video_id: String,
    pub index: u64,
}

impl FrameKey {
    pub fn new(video_id: impl Into<String>, index: u64) -> Self {
        Self { video_id: video_id.into(), index }
    }
}

impl fmt::Display for FrameKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.video_id, self.index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub key: FrameKey,
    pub ground_truth: Vec<GroundTruthBox>,
    pub image_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub id: String,
    pub frames: Vec<FrameRecord>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VideoDataset {
    pub videos: Vec<Video>,
}

impl VideoDataset {
    /// All frames in dataset order (video order, then frame order).
    pub fn frames(&self) -> impl Iterator<Item = &FrameRecord> + '_ {
        self.videos.iter().flat_map(|v| v.frames.iter())
    }

    pub fn frame_count(&self) -> usize {
        self.videos.iter().map(|v| v.frames.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_count() == 0
    }

    pub fn keys(&self) -> BTreeSet<FrameKey> {
        self.frames().map(|f| f.key.clone()).collect()
    }

    /// Keys of `map` that do not name a frame of this dataset, in map order.
    pub fn unknown_keys<V>(&self, map: &FrameMap<V>) -> Vec<FrameKey> {
        let known = self.keys();
        map.keys().filter(|k| !known.contains(*k)).cloned().collect()
    }
}

/// Insertion-ordered map keyed by frame.
///
/// Iteration follows insertion order, so a dump read from disk or assembled in
/// dataset order is written back in the same order.
#[derive(Debug, Clone)]
pub struct FrameMap<V> {
    entries: Vec<(FrameKey, V)>,
    index: BTreeMap<FrameKey, usize>,
}

impl<V> Default for FrameMap<V> {
    fn default() -> Self {
        Self { entries: Vec::new(), index: BTreeMap::new() }
    }
}

impl<V: PartialEq> PartialEq for FrameMap<V> {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl<V> FrameMap<V> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces. A replaced value keeps its original position.
    pub fn insert(&mut self, key: FrameKey, value: V) -> Option<V> {
        match self.index.get(&key) {
            Some(&i) => Some(core::mem::replace(&mut self.entries[i].1, value)),
            None => {
                self.index.insert(key.clone(), self.entries.len());
                self.entries.push((key, value));
                None
            }
        }
    }

    pub fn get(&self, key: &FrameKey) -> Option<&V> {
        self.index.get(key).map(|&i| &self.entries[i].1)
    }

    pub fn contains_key(&self, key: &FrameKey) -> bool {
        self.index.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FrameKey, &V)> + '_ {
        self.entries.iter().map(|(k, v)| (k, v))
    }

    pub fn keys(&self) -> impl Iterator<Item = &FrameKey> + '_ {
        self.entries.iter().map(|(k, _)| k)
    }

    pub fn values(&self) -> impl Iterator<Item = &V> + '_ {
        self.entries.iter().map(|(_, v)| v)
    }
}

impl<V> FromIterator<(FrameKey, V)> for FrameMap<V> {
    fn from_iter<I: IntoIterator<Item = (FrameKey, V)>>(iter: I) -> Self {
        let mut map = Self::new();
        for (k, v) in iter {
            map.insert(k, v);
        }
        map
    }
}

impl<V> IntoIterator for FrameMap<V> {
    type Item = (FrameKey, V);
    type IntoIter = alloc::vec::IntoIter<(FrameKey, V)>;

    fn into_iter(self) -> Self::IntoIter {
        self.entries.into_iter()
    }
}

pub type DetectionDump = FrameMap<Vec<Detection>>;

/// Per-frame difficulty scores, either ground truth or predicted.
pub type ScoreTable = FrameMap<f64>;

/// Total order over detection content: descending confidence, then label, then
/// box corners. Equal-content detections are interchangeable, so sorting by this
/// key (stable, falling back to input position) makes downstream results
/// independent of input order.
pub(crate) fn canonical_cmp(a: &Detection, b: &Detection) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then_with(|| a.label.cmp(&b.label))
        .then_with(|| a.bbox.x1.total_cmp(&b.bbox.x1))
        .then_with(|| a.bbox.y1.total_cmp(&b.bbox.y1))
        .then_with(|| a.bbox.x2.total_cmp(&b.bbox.x2))
        .then_with(|| a.bbox.y2.total_cmp(&b.bbox.y2))
}

/// Input indices of `dets` in canonical order.
pub(crate) fn canonical_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| canonical_cmp(&dets[i], &dets[j]));
    order
}

/// One broken invariant, located by frame (when known) and field path.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub key: Option<FrameKey>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.key {
            Some(k) => write!(f, "{k}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

fn violation(key: Option<&FrameKey>, field: String, message: impl Into<String>) -> Violation {
    Violation { key: key.cloned(), field, message: message.into() }
}

fn check_box(out: &mut Vec<Violation>, key: &FrameKey, field: String, b: &BoundingBox) {
    if !b.is_valid() {
        out.push(violation(
            Some(key),
            field,
            format!("degenerate or non-finite box [{}, {}, {}, {}]", b.x1, b.y1, b.x2, b.y2),
        ));
    }
}

/// Reports every broken dataset invariant. Empty iff the dataset is well formed.
pub fn validate_dataset(ds: &VideoDataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut video_ids = BTreeSet::new();
    for (vi, video) in ds.videos.iter().enumerate() {
        if video.id.is_empty() {
            out.push(violation(None, format!("videos[{vi}].id"), "empty video id"));
        }
        if !video_ids.insert(video.id.as_str()) {
            out.push(violation(None, format!("videos[{vi}].id"), format!("duplicate video id {:?}", video.id)));
        }
        let mut prev: Option<u64> = None;
        for (fi, frame) in video.frames.iter().enumerate() {
            let key = &frame.key;
            if key.video_id != video.id {
                out.push(violation(
                    Some(key),
                    format!("videos[{vi}].frames[{fi}]"),
                    format!("frame belongs to video {:?} but is listed under {:?}", key.video_id, video.id),
                ));
            }
            if let Some(p) = prev {
                if key.index == p {
                    out.push(violation(Some(key), format!("videos[{vi}].frames[{fi}].index"), "duplicate frame index"));
                } else if key.index < p {
                    out.push(violation(
                        Some(key),
                        format!("videos[{vi}].frames[{fi}].index"),
                        format!("frame index {} follows {p}; indices must increase", key.index),
                    ));
                }
            }
            prev = Some(key.index);
            for (gi, gt) in frame.ground_truth.iter().enumerate() {
                let field = format!("videos[{vi}].frames[{fi}].ground_truth[{gi}]");
                if gt.label.is_empty() {
                    out.push(violation(Some(key), format!("{field}.label"), "empty label"));
                }
                check_box(&mut out, key, format!("{field}.bbox"), &gt.bbox);
            }
        }
    }
    out
}

/// Reports detections with out-of-range confidence, bad boxes or empty labels.
pub fn validate_dump(dump: &DetectionDump) -> Vec<Violation> {
    let mut out = Vec::new();
    for (key, dets) in dump.iter() {
        for (i, d) in dets.iter().enumerate() {
            let field = format!("boxes[{i}]");
            if !(0.0..=1.0).contains(&d.confidence) {
                out.push(violation(Some(key), format!("{field}.score"), format!("confidence {} outside [0, 1]", d.confidence)));
            }
            if d.label.is_empty() {
                out.push(violation(Some(key), format!("{field}.label"), "empty label"));
            }
            check_box(&mut out, key, format!("{field}.bbox"), &d.bbox);
        }
    }
    out
}
