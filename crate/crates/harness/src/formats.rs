//! JSON documents: datasets, detection dumps, score files and reference pools.
//!
//! Boxes are `[x1, y1, x2, y2]` arrays and numbers are 64-bit floats. Documents
//! are written compactly, one per file, UTF-8.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use odd_core::{
    validate_dataset, validate_dump, BoundingBox, Detection, DetectionDump, FrameKey, FrameRecord, GlobalPool,
    GroundTruthBox, ScoreTable, Video, VideoDataset, Violation,
};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetDoc {
    pub videos: Vec<VideoDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VideoDoc {
    pub id: String,
    pub frames: Vec<FrameDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FrameDoc {
    pub index: u64,
    #[serde(default)]
    pub image_path: Option<String>,
    #[serde(default)]
    pub ground_truth: Vec<GroundTruthDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GroundTruthDoc {
    pub label: String,
    pub bbox: [f64; 4],
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DumpDoc {
    pub detections: Vec<DumpEntryDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DumpEntryDoc {
    pub video_id: String,
    pub index: u64,
    pub boxes: Vec<BoxDoc>,
}

/// One detection as it appears in dumps and on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDoc {
    pub label: String,
    pub bbox: [f64; 4],
    pub score: f64,
}

impl From<&Detection> for BoxDoc {
    fn from(d: &Detection) -> Self {
        BoxDoc { label: d.label.clone(), bbox: d.bbox.to_array(), score: d.confidence }
    }
}

impl BoxDoc {
    fn to_detection(&self) -> Detection {
        let [x1, y1, x2, y2] = self.bbox;
        Detection::new(BoundingBox { x1, y1, x2, y2 }, self.label.clone(), self.score)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoresDoc {
    pub scores: Vec<ScoreEntryDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreEntryDoc {
    pub video_id: String,
    pub index: u64,
    pub score: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PoolsDoc {
    pub pools: Vec<PoolDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolDoc {
    pub video_id: String,
    pub frames: Vec<u64>,
}

fn parse<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|source| Error::Parse { origin: origin.to_string(), source })
}

fn to_line<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string(doc).expect("documents serialize");
    s.push('\n');
    s
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn reject(origin: &str, violations: Vec<Violation>) -> Result<()> {
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::Invalid { origin: origin.to_string(), violations })
    }
}

// ---- datasets ----

impl From<DatasetDoc> for VideoDataset {
    fn from(doc: DatasetDoc) -> Self {
        let videos = doc
            .videos
            .into_iter()
            .map(|v| Video {
                frames: v
                    .frames
                    .into_iter()
                    .map(|f| FrameRecord {
                        key: FrameKey::new(v.id.clone(), f.index),
                        image_path: f.image_path,
                        ground_truth: f
                            .ground_truth
                            .into_iter()
                            .map(|g| {
                                let [x1, y1, x2, y2] = g.bbox;
                                GroundTruthBox::new(BoundingBox { x1, y1, x2, y2 }, g.label)
                            })
                            .collect(),
                    })
                    .collect(),
                id: v.id,
            })
            .collect();
        VideoDataset { videos }
    }
}

impl From<&VideoDataset> for DatasetDoc {
    fn from(ds: &VideoDataset) -> Self {
        DatasetDoc {
            videos: ds
                .videos
                .iter()
                .map(|v| VideoDoc {
                    id: v.id.clone(),
                    frames: v
                        .frames
                        .iter()
                        .map(|f| FrameDoc {
                            index: f.key.index,
                            image_path: f.image_path.clone(),
                            ground_truth: f
                                .ground_truth
                                .iter()
                                .map(|g| GroundTruthDoc { label: g.label.clone(), bbox: g.bbox.to_array() })
                                .collect(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Parses without checking invariants; see [`odd_core::validate_dataset`].
pub fn parse_dataset_unchecked(text: &str, origin: &str) -> Result<VideoDataset> {
    Ok(parse::<DatasetDoc>(text, origin)?.into())
}

/// Parses and rejects datasets that break any invariant.
pub fn parse_dataset(text: &str, origin: &str) -> Result<VideoDataset> {
    let ds = parse_dataset_unchecked(text, origin)?;
    reject(origin, validate_dataset(&ds))?;
    Ok(ds)
}

pub fn dataset_to_string(ds: &VideoDataset) -> String {
    to_line(&DatasetDoc::from(ds))
}

pub fn read_dataset(path: &Path) -> Result<VideoDataset> {
    parse_dataset(&read_text(path)?, &path.display().to_string())
}

pub fn read_dataset_unchecked(path: &Path) -> Result<VideoDataset> {
    parse_dataset_unchecked(&read_text(path)?, &path.display().to_string())
}

pub fn write_dataset(path: &Path, ds: &VideoDataset) -> Result<()> {
    write_text(path, &dataset_to_string(ds))
}

// ---- detection dumps ----

/// Converts a dump document, reporting repeated frame entries as violations.
pub fn dump_from_doc(doc: DumpDoc) -> (DetectionDump, Vec<Violation>) {
    let mut dump = DetectionDump::new();
    let mut violations = Vec::new();
    for (i, entry) in doc.detections.into_iter().enumerate() {
        let key = FrameKey::new(entry.video_id, entry.index);
        let dets = entry.boxes.iter().map(BoxDoc::to_detection).collect();
        if dump.contains_key(&key) {
            violations.push(Violation {
                key: Some(key.clone()),
                field: format!("detections[{i}]"),
                message: "frame listed more than once".into(),
            });
        }
        dump.insert(key, dets);
    }
    (dump, violations)
}

pub fn dump_to_doc(dump: &DetectionDump) -> DumpDoc {
    DumpDoc {
        detections: dump
            .iter()
            .map(|(k, dets)| DumpEntryDoc {
                video_id: k.video_id.clone(),
                index: k.index,
                boxes: dets.iter().map(BoxDoc::from).collect(),
            })
            .collect(),
    }
}

/// Parses a dump and rejects duplicates, bad boxes and out-of-range confidences.
pub fn parse_dump(text: &str, origin: &str) -> Result<DetectionDump> {
    let (dump, mut violations) = dump_from_doc(parse(text, origin)?);
    violations.extend(validate_dump(&dump));
    reject(origin, violations)?;
    Ok(dump)
}

pub fn dump_to_string(dump: &DetectionDump) -> String {
    to_line(&dump_to_doc(dump))
}

pub fn read_dump(path: &Path) -> Result<DetectionDump> {
    parse_dump(&read_text(path)?, &path.display().to_string())
}

pub fn write_dump(path: &Path, dump: &DetectionDump) -> Result<()> {
    write_text(path, &dump_to_string(dump))
}

// ---- score files ----

pub fn parse_scores(text: &str, origin: &str) -> Result<ScoreTable> {
    let doc: ScoresDoc = parse(text, origin)?;
    let mut table = ScoreTable::new();
    let mut violations = Vec::new();
    for (i, e) in doc.scores.into_iter().enumerate() {
        let key = FrameKey::new(e.video_id, e.index);
        if !(0.0..=1.0).contains(&e.score) {
            violations.push(Violation {
                key: Some(key.clone()),
                field: format!("scores[{i}].score"),
                message: format!("score {} outside [0, 1]", e.score),
            });
        }
        if table.insert(key.clone(), e.score).is_some() {
            violations.push(Violation {
                key: Some(key),
                field: format!("scores[{i}]"),
                message: "frame listed more than once".into(),
            });
        }
    }
    reject(origin, violations)?;
    Ok(table)
}

pub fn scores_to_string(scores: &ScoreTable) -> String {
    to_line(&ScoresDoc {
        scores: scores
            .iter()
            .map(|(k, &score)| ScoreEntryDoc { video_id: k.video_id.clone(), index: k.index, score })
            .collect(),
    })
}

pub fn read_scores(path: &Path) -> Result<ScoreTable> {
    parse_scores(&read_text(path)?, &path.display().to_string())
}

pub fn write_scores(path: &Path, scores: &ScoreTable) -> Result<()> {
    write_text(path, &scores_to_string(scores))
}

/// Frames of each video named in a score table, grouped in first-seen video
/// order and sorted by index.
pub fn videos_in_scores(scores: &ScoreTable) -> Vec<(String, Vec<FrameKey>)> {
    let mut out: Vec<(String, Vec<FrameKey>)> = Vec::new();
    let mut seen = BTreeSet::new();
    for key in scores.keys() {
        if seen.insert(key.video_id.clone()) {
            out.push((key.video_id.clone(), Vec::new()));
        }
        let slot = out.iter_mut().find(|(v, _)| *v == key.video_id).expect("video registered");
        slot.1.push(key.clone());
    }
    for (_, keys) in out.iter_mut() {
        keys.sort_by_key(|k| k.index);
    }
    out
}

// ---- reference pools ----

pub fn pools_to_string(pools: &[GlobalPool]) -> String {
    to_line(&PoolsDoc {
        pools: pools.iter().map(|p| PoolDoc { video_id: p.video_id.clone(), frames: p.frame_indices() }).collect(),
    })
}

pub fn parse_pools(text: &str, origin: &str) -> Result<Vec<PoolDoc>> {
    Ok(parse::<PoolsDoc>(text, origin)?.pools)
}

pub fn write_pools(path: &Path, pools: &[GlobalPool]) -> Result<()> {
    write_text(path, &pools_to_string(pools))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    write_text(path, &s)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DATASET: &str = r#"{"videos":[
        {"id":"a","frames":[
            {"index":0,"image_path":"a/0.jpg","ground_truth":[{"label":"cat","bbox":[0,0,10,10]}]},
            {"index":1,"image_path":null,"ground_truth":[]}]},
        {"id":"b","frames":[{"index":5,"ground_truth":[{"label":"dog","bbox":[1.5,2,3,4.25]}]}]}]}"#;

    #[test]
    fn dataset_parses_and_round_trips() {
        let ds = parse_dataset(DATASET, "inline").unwrap();
        assert_eq!(ds.frame_count(), 3);
        assert_eq!(ds.videos[0].frames[0].image_path.as_deref(), Some("a/0.jpg"));
        assert_eq!(ds.videos[1].frames[0].key, FrameKey::new("b", 5));
        let again = parse_dataset(&dataset_to_string(&ds), "again").unwrap();
        assert_eq!(ds, again);
    }

    #[test]
    fn degenerate_ground_truth_is_rejected_at_ingestion() {
        let bad = DATASET.replace("[0,0,10,10]", "[3,0,3,10]");
        let err = parse_dataset(&bad, "bad.json").unwrap_err();
        assert!(matches!(err, Error::Invalid { ref violations, .. } if violations.len() == 1));
        assert_eq!(err.exit_code(), 1);
        assert!(parse_dataset_unchecked(&bad, "bad.json").is_ok());
    }

    #[test]
    fn dump_rejects_confidence_and_duplicates() {
        let bad_score = r#"{"detections":[{"video_id":"a","index":0,"boxes":[{"label":"cat","bbox":[0,0,1,1],"score":1.5}]}]}"#;
        match parse_dump(bad_score, "d").unwrap_err() {
            Error::Invalid { violations, .. } => {
                assert_eq!(violations.len(), 1);
                assert_eq!(violations[0].field, "boxes[0].score");
            }
            e => panic!("{e}"),
        }
        let dup = r#"{"detections":[{"video_id":"a","index":0,"boxes":[]},{"video_id":"a","index":0,"boxes":[]}]}"#;
        match parse_dump(dup, "d").unwrap_err() {
            Error::Invalid { violations, .. } => assert_eq!(violations[0].field, "detections[1]"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn scores_parse_and_group() {
        let text = r#"{"scores":[{"video_id":"b","index":2,"score":0.5},{"video_id":"a","index":1,"score":0.25},{"video_id":"b","index":0,"score":1.0}]}"#;
        let t = parse_scores(text, "s").unwrap();
        let groups = videos_in_scores(&t);
        assert_eq!(groups[0].0, "b");
        assert_eq!(groups[0].1, [FrameKey::new("b", 0), FrameKey::new("b", 2)]);
        assert!(parse_scores(&text.replace("1.0", "1.2"), "s").is_err());
        assert_eq!(parse_scores(&scores_to_string(&t), "s2").unwrap(), t);
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        assert!(matches!(parse_dump("{", "x"), Err(Error::Parse { .. })));
    }
}
