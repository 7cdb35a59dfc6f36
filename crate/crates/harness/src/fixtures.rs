//! Deterministic synthetic videos with paired fast/slow detector dumps.
//!
//! Each video carries a latent difficulty that random-walks over its frames.
//! Both detectors see the same random draws, but the video detector sees the
//! difficulty scaled down, so it misses less, localizes tighter and
//! hallucinates less on the same frame.

use std::fs;
use std::path::{Path, PathBuf};

use odd_core::{
    label_dataset, BoundingBox, Detection, DetectionDump, FrameKey, FrameRecord, GroundTruthBox, MetricConfig,
    ScoreTable, Video, VideoDataset,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::formats::{write_dataset, write_dump, write_scores};
use crate::{Error, Result};

const LABELS: [&str; 5] = ["person", "car", "dog", "cat", "bicycle"];
const VOD_DIFFICULTY_SCALE: f64 = 0.35;
const MAX_FALSE_POSITIVES: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub seed: u64,
    pub videos: usize,
    pub frames_per_video: usize,
    pub max_objects: usize,
    pub width: f64,
    pub height: f64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec { seed: 0, videos: 20, frames_per_video: 30, max_objects: 3, width: 640.0, height: 480.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixtures {
    pub dataset: VideoDataset,
    pub siod: DetectionDump,
    pub vod: DetectionDump,
    /// Ground-truth difficulty of the SIOD dump.
    pub scores: ScoreTable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixturePaths {
    pub dataset: PathBuf,
    pub siod: PathBuf,
    pub vod: PathBuf,
    pub scores: PathBuf,
}

impl FixturePaths {
    pub fn in_dir(dir: &Path) -> Self {
        FixturePaths {
            dataset: dir.join("dataset.json"),
            siod: dir.join("siod.json"),
            vod: dir.join("vod.json"),
            scores: dir.join("scores.json"),
        }
    }
}

struct Object {
    label: &'static str,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    vx: f64,
    vy: f64,
}

impl Object {
    fn random(rng: &mut ChaCha8Rng, spec: &FixtureSpec) -> Self {
        let w = rng.random_range(40.0..160.0);
        let h = rng.random_range(40.0..160.0);
        Object {
            label: LABELS[rng.random_range(0..LABELS.len())],
            cx: rng.random_range(w / 2.0..spec.width - w / 2.0),
            cy: rng.random_range(h / 2.0..spec.height - h / 2.0),
            w,
            h,
            vx: rng.random_range(-4.0..4.0),
            vy: rng.random_range(-4.0..4.0),
        }
    }

    fn step(&mut self, spec: &FixtureSpec) {
        self.cx += self.vx;
        self.cy += self.vy;
        if self.cx - self.w / 2.0 < 0.0 || self.cx + self.w / 2.0 > spec.width {
            self.vx = -self.vx;
            self.cx = self.cx.clamp(self.w / 2.0, spec.width - self.w / 2.0);
        }
        if self.cy - self.h / 2.0 < 0.0 || self.cy + self.h / 2.0 > spec.height {
            self.vy = -self.vy;
            self.cy = self.cy.clamp(self.h / 2.0, spec.height - self.h / 2.0);
        }
    }

    fn bbox(&self) -> BoundingBox {
        BoundingBox {
            x1: self.cx - self.w / 2.0,
            y1: self.cy - self.h / 2.0,
            x2: self.cx + self.w / 2.0,
            y2: self.cy + self.h / 2.0,
        }
    }
}

/// Draws shared by both detectors for one ground-truth box.
struct TrueDraw {
    miss: f64,
    jitter: [f64; 4],
    conf: f64,
}

struct FalseDraw {
    gate: f64,
    label: &'static str,
    bbox: BoundingBox,
    conf: f64,
}

fn detect(gts: &[GroundTruthBox], truths: &[TrueDraw], falses: &[FalseDraw], d: f64) -> Vec<Detection> {
    let mut out = Vec::new();
    for (g, t) in gts.iter().zip(truths) {
        if t.miss < 0.6 * d {
            continue;
        }
        let (w, h) = (g.bbox.width(), g.bbox.height());
        let s = 0.45 * d;
        let bbox = BoundingBox {
            x1: g.bbox.x1 + t.jitter[0] * s * w,
            y1: g.bbox.y1 + t.jitter[1] * s * h,
            x2: g.bbox.x2 + t.jitter[2] * s * w,
            y2: g.bbox.y2 + t.jitter[3] * s * h,
        };
        out.push(Detection::new(bbox, g.label.clone(), 1.0 - 0.6 * d * t.conf));
    }
    for f in falses {
        if f.gate < 0.5 * d {
            out.push(Detection::new(f.bbox, f.label, f.conf * (0.3 + 0.5 * d)));
        }
    }
    out
}

pub fn make_fixtures(spec: &FixtureSpec) -> Fixtures {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut videos = Vec::with_capacity(spec.videos);
    let mut siod = DetectionDump::new();
    let mut vod = DetectionDump::new();
    for v in 0..spec.videos {
        let id = format!("v{v:03}");
        let n_objects = if spec.max_objects == 0 { 0 } else { rng.random_range(1..=spec.max_objects) };
        let mut objects: Vec<Object> = (0..n_objects).map(|_| Object::random(&mut rng, spec)).collect();
        let mut difficulty: f64 = rng.random_range(0.0..1.0);
        let mut frames = Vec::with_capacity(spec.frames_per_video);
        for i in 0..spec.frames_per_video as u64 {
            let key = FrameKey::new(id.clone(), i);
            let gts: Vec<GroundTruthBox> = objects.iter().map(|o| GroundTruthBox::new(o.bbox(), o.label)).collect();
            let truths: Vec<TrueDraw> = gts
                .iter()
                .map(|_| TrueDraw {
                    miss: rng.random_range(0.0..1.0),
                    jitter: [(); 4].map(|_| rng.random_range(-1.0..1.0)),
                    conf: rng.random_range(0.0..1.0),
                })
                .collect();
            let falses: Vec<FalseDraw> = (0..MAX_FALSE_POSITIVES)
                .map(|_| {
                    let w = rng.random_range(20.0..120.0);
                    let h = rng.random_range(20.0..120.0);
                    let x1 = rng.random_range(0.0..spec.width - w);
                    let y1 = rng.random_range(0.0..spec.height - h);
                    FalseDraw {
                        gate: rng.random_range(0.0..1.0),
                        label: LABELS[rng.random_range(0..LABELS.len())],
                        bbox: BoundingBox { x1, y1, x2: x1 + w, y2: y1 + h },
                        conf: rng.random_range(0.0..1.0),
                    }
                })
                .collect();
            siod.insert(key.clone(), detect(&gts, &truths, &falses, difficulty));
            vod.insert(key.clone(), detect(&gts, &truths, &falses, VOD_DIFFICULTY_SCALE * difficulty));
            frames.push(FrameRecord { image_path: Some(format!("{id}/{i:06}.jpg")), key, ground_truth: gts });

            difficulty = (difficulty + rng.random_range(-0.15..0.15)).clamp(0.0, 1.0);
            for o in objects.iter_mut() {
                o.step(spec);
            }
        }
        videos.push(Video { id, frames });
    }
    let dataset = VideoDataset { videos };
    let scores = label_dataset(&dataset, &siod, &MetricConfig::default())
        .expect("generated dump matches the generated dataset")
        .scores;
    Fixtures { dataset, siod, vod, scores }
}

impl Fixtures {
    pub fn write(&self, dir: &Path) -> Result<FixturePaths> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = FixturePaths::in_dir(dir);
        write_dataset(&paths.dataset, &self.dataset)?;
        write_dump(&paths.siod, &self.siod)?;
        write_dump(&paths.vod, &self.vod)?;
        write_scores(&paths.scores, &self.scores)?;
        Ok(paths)
    }
}
