//! Two-round hybrid pipeline: score and route every frame, run the fast
//! detector on easy frames, then the video detector on the rest.

use std::time::{Duration, Instant};

use odd_core::{
    model_speed, route_for, select_pool, CostModel, DetectionDump, FrameRecord, GlobalPool, PoolConfig, Route,
    ScheduleDecision, ScoreTable, VideoDataset,
};
use serde::Serialize;

use crate::backend::{announce_pool, Capability, DetectorBackend};
use crate::formats::PoolDoc;
use crate::scores::ScoreSource;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerConfig {
    pub threshold: f64,
    /// Announce a per-video reference pool to the VOD backend.
    pub pool: Option<PoolConfig>,
    pub cost: CostModel,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig { threshold: 0.2, pool: None, cost: CostModel::default() }
    }
}

pub enum Scores {
    Source(Box<dyn ScoreSource>),
    /// Ask the SIOD backend itself.
    FromSiod,
}

pub struct Backends {
    pub scores: Scores,
    pub siod: Box<dyn DetectorBackend>,
    pub vod: Box<dyn DetectorBackend>,
}

impl Backends {
    pub fn new(scores: Scores, siod: Box<dyn DetectorBackend>, vod: Box<dyn DetectorBackend>) -> Self {
        Backends { scores, siod, vod }
    }

    /// Shuts everything down, reporting the first failure.
    pub fn shutdown(self) -> Result<()> {
        let a = match self.scores {
            Scores::Source(s) => s.shutdown(),
            Scores::FromSiod => Ok(()),
        };
        let b = self.siod.shutdown();
        let c = self.vod.shutdown();
        a.and(b).and(c)
    }

    fn check(&self, cfg: &SchedulerConfig) -> Result<()> {
        let need = |b: &dyn DetectorBackend, cap: Capability, role: &str| {
            if b.has(cap) {
                Ok(())
            } else {
                Err(Error::Config(format!("{role} backend {:?} does not advertise {cap}", b.name())))
            }
        };
        need(self.siod.as_ref(), Capability::Detect, "SIOD")?;
        need(self.vod.as_ref(), Capability::Detect, "VOD")?;
        if matches!(self.scores, Scores::FromSiod) {
            need(self.siod.as_ref(), Capability::Score, "SIOD")?;
        }
        if cfg.pool.is_some() {
            need(self.vod.as_ref(), Capability::GlobalPool, "VOD")?;
        }
        Ok(())
    }

    fn score(&mut self, frame: &FrameRecord) -> Result<f64> {
        let value = match &mut self.scores {
            Scores::Source(s) => s.score(frame)?,
            Scores::FromSiod => self.siod.score(frame)?,
        };
        if !(0.0..=1.0).contains(&value) {
            return Err(odd_core::Error::ScoreOutOfRange { key: frame.key.clone(), value }.into());
        }
        Ok(value)
    }
}

/// Outcome of one pipeline run. Contains no wall-clock quantities, so equal
/// inputs give equal reports.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub threshold: f64,
    pub decisions: Vec<ScheduleDecision>,
    /// One entry per frame, in dataset order.
    pub merged: DetectionDump,
    pub pools: Vec<GlobalPool>,
    pub n_siod: usize,
    pub n_vod: usize,
    pub proportion_siod: f64,
    pub modeled_total_cost: f64,
    pub modeled_fps: f64,
}

/// Wall-clock timings of a run, kept apart from the modeled numbers.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeasuredSpeed {
    pub frames: usize,
    pub score_time: Duration,
    pub siod_time: Duration,
    pub vod_time: Duration,
}

impl MeasuredSpeed {
    pub fn total(&self) -> Duration {
        self.score_time + self.siod_time + self.vod_time
    }

    /// Frames per second of backend time, absent for runs too fast to time.
    pub fn fps(&self) -> Option<f64> {
        let secs = self.total().as_secs_f64();
        (secs > 0.0).then(|| self.frames as f64 / secs)
    }

    /// Mean seconds per call, usable in place of the default cost constants.
    pub fn cost_model(&self, report: &RunReport) -> Option<CostModel> {
        let mean = |t: Duration, n: usize| (n > 0).then(|| t.as_secs_f64() / n as f64);
        let siod = mean(self.siod_time, report.n_siod)?;
        let vod = mean(self.vod_time, report.n_vod)?;
        let score = mean(self.score_time, self.frames).unwrap_or(0.0);
        CostModel::new(siod, vod, score).ok()
    }
}

fn at_frame(round: u8, frame: &FrameRecord) -> impl FnOnce(Error) -> Error + '_ {
    move |e| Error::Pipeline { round, at: format!("frame {}", frame.key), source: Box::new(e) }
}

pub fn run(ds: &VideoDataset, cfg: &SchedulerConfig, backends: &mut Backends) -> Result<RunReport> {
    run_measured(ds, cfg, backends).map(|(r, _)| r)
}

pub fn run_measured(ds: &VideoDataset, cfg: &SchedulerConfig, backends: &mut Backends) -> Result<(RunReport, MeasuredSpeed)> {
    if cfg.threshold.is_nan() {
        return Err(Error::Config("threshold is NaN".into()));
    }
    cfg.cost.validate()?;
    if cfg.cost.is_inverted() {
        log::warn!("VOD cost {} is below SIOD cost {}", cfg.cost.vod_cost, cfg.cost.siod_cost);
    }
    backends.check(cfg)?;
    let mut measured = MeasuredSpeed { frames: ds.frame_count(), ..Default::default() };

    // round 1: score everything, fast detector on easy frames
    let mut scores = ScoreTable::new();
    let mut decisions = Vec::with_capacity(ds.frame_count());
    let mut siod_out = DetectionDump::new();
    for frame in ds.frames() {
        let t = Instant::now();
        let score = backends.score(frame).map_err(at_frame(1, frame))?;
        measured.score_time += t.elapsed();
        let route = route_for(score, cfg.threshold);
        scores.insert(frame.key.clone(), score);
        decisions.push(ScheduleDecision { key: frame.key.clone(), score, route });
        if route == Route::Siod {
            let t = Instant::now();
            let dets = backends.siod.detect(frame).map_err(at_frame(1, frame))?;
            measured.siod_time += t.elapsed();
            siod_out.insert(frame.key.clone(), dets);
        }
    }

    // round 2: per video, optional pool announcement, then the video detector
    let mut vod_out = DetectionDump::new();
    let mut pools = Vec::new();
    for video in &ds.videos {
        let hard: Vec<&FrameRecord> = video.frames.iter().filter(|f| !siod_out.contains_key(&f.key)).collect();
        if hard.is_empty() {
            continue;
        }
        if let Some(pc) = &cfg.pool {
            if video.frames.len() <= pc.k {
                log::info!("video {} has {} frames, pool is the whole video", video.id, video.frames.len());
            }
            let keys: Vec<_> = video.frames.iter().map(|f| f.key.clone()).collect();
            let wrap = |e: Error| Error::Pipeline { round: 2, at: format!("pool for video {}", video.id), source: Box::new(e) };
            let pool = select_pool(&video.id, &keys, &scores, pc).map_err(|e| wrap(e.into()))?;
            announce_pool(&pool, backends.vod.as_mut()).map_err(wrap)?;
            pools.push(pool);
        }
        for frame in hard {
            let t = Instant::now();
            let dets = backends.vod.detect(frame).map_err(at_frame(2, frame))?;
            measured.vod_time += t.elapsed();
            vod_out.insert(frame.key.clone(), dets);
        }
    }

    let mut merged = DetectionDump::new();
    for d in &decisions {
        let source = match d.route {
            Route::Siod => &siod_out,
            Route::Vod => &vod_out,
        };
        merged.insert(d.key.clone(), source.get(&d.key).cloned().expect("every routed frame was detected"));
    }
    let speed = model_speed(&decisions, &cfg.cost)?;
    let report = RunReport {
        threshold: cfg.threshold,
        proportion_siod: speed.proportion_siod(),
        n_siod: speed.n_siod,
        n_vod: speed.n_vod,
        modeled_total_cost: speed.total_cost,
        modeled_fps: speed.fps,
        decisions,
        merged,
        pools,
    };
    Ok((report, measured))
}

#[derive(Debug, Serialize)]
pub struct DecisionDoc {
    pub video_id: String,
    pub index: u64,
    pub score: f64,
    pub route: &'static str,
}

#[derive(Debug, Serialize)]
pub struct RunReportDoc {
    pub threshold: f64,
    pub n_siod: usize,
    pub n_vod: usize,
    pub proportion_siod: f64,
    pub modeled_total_cost: f64,
    pub modeled_fps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measured_fps: Option<f64>,
    pub pools: Vec<PoolDoc>,
    pub decisions: Vec<DecisionDoc>,
}

impl RunReport {
    pub fn to_doc(&self, measured_fps: Option<f64>) -> RunReportDoc {
        RunReportDoc {
            threshold: self.threshold,
            n_siod: self.n_siod,
            n_vod: self.n_vod,
            proportion_siod: self.proportion_siod,
            modeled_total_cost: self.modeled_total_cost,
            modeled_fps: self.modeled_fps,
            measured_fps,
            pools: self
                .pools
                .iter()
                .map(|p| PoolDoc { video_id: p.video_id.clone(), frames: p.frame_indices() })
                .collect(),
            decisions: self
                .decisions
                .iter()
                .map(|d| DecisionDoc {
                    video_id: d.key.video_id.clone(),
                    index: d.key.index,
                    score: d.score,
                    route: d.route.as_str(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ReplayBackend;
    use crate::scores::FileScores;
    use odd_core::{BoundingBox, Detection, FrameKey, Video};
    use std::sync::Arc;

    fn fixture() -> (VideoDataset, DetectionDump, DetectionDump, ScoreTable) {
        let bb = BoundingBox::new(0.0, 0.0, 4.0, 4.0).unwrap();
        let mut frames = Vec::new();
        let (mut s, mut v, mut t) = (DetectionDump::new(), DetectionDump::new(), ScoreTable::new());
        for (i, score) in [0.1, 0.2, 0.3, 0.4].into_iter().enumerate() {
            let key = FrameKey::new("v", i as u64);
            frames.push(FrameRecord { key: key.clone(), ground_truth: vec![], image_path: None });
            s.insert(key.clone(), vec![Detection::new(bb, "siod", 0.5)]);
            v.insert(key.clone(), vec![Detection::new(bb, "vod", 0.5)]);
            t.insert(key, score);
        }
        (VideoDataset { videos: vec![Video { id: "v".into(), frames }] }, s, v, t)
    }

    fn backends(s: &DetectionDump, v: &DetectionDump, t: &ScoreTable, pool: bool) -> Backends {
        let mut vod = ReplayBackend::new("vod", Arc::new(v.clone()));
        if pool {
            vod = vod.with_global_pool();
        }
        Backends::new(
            Scores::Source(Box::new(FileScores::new(Arc::new(t.clone()), "t"))),
            Box::new(ReplayBackend::new("siod", Arc::new(s.clone()))),
            Box::new(vod),
        )
    }

    #[test]
    fn routes_by_strict_threshold_and_partitions() {
        let (ds, s, v, t) = fixture();
        let cfg = SchedulerConfig { threshold: 0.25, cost: CostModel::new(1.0, 2.0, 0.0).unwrap(), ..Default::default() };
        let r = run(&ds, &cfg, &mut backends(&s, &v, &t, false)).unwrap();
        let routes: Vec<Route> = r.decisions.iter().map(|d| d.route).collect();
        assert_eq!(routes, [Route::Siod, Route::Siod, Route::Vod, Route::Vod]);
        assert_eq!(r.proportion_siod, 0.5);
        assert_eq!(r.modeled_total_cost, 6.0);
        let labels: Vec<&str> = r.merged.values().map(|d| d[0].label.as_str()).collect();
        assert_eq!(labels, ["siod", "siod", "vod", "vod"]);
    }

    #[test]
    fn extremes_pass_one_dump_through() {
        let (ds, s, v, t) = fixture();
        let vod_only = run(&ds, &SchedulerConfig { threshold: 0.0, ..Default::default() }, &mut backends(&s, &v, &t, false)).unwrap();
        assert_eq!(vod_only.merged, v);
        let siod_only = run(&ds, &SchedulerConfig { threshold: 1.01, ..Default::default() }, &mut backends(&s, &v, &t, false)).unwrap();
        assert_eq!(siod_only.merged, s);
    }

    #[test]
    fn pool_requires_capability_up_front() {
        let (ds, s, v, t) = fixture();
        let cfg = SchedulerConfig { pool: Some(PoolConfig::new(2).unwrap()), ..Default::default() };
        assert!(matches!(run(&ds, &cfg, &mut backends(&s, &v, &t, false)), Err(Error::Config(_))));
        let r = run(&ds, &cfg, &mut backends(&s, &v, &t, true)).unwrap();
        assert_eq!(r.pools[0].frame_indices(), [0, 1]);
    }

    #[test]
    fn missing_detections_name_round_and_frame() {
        let (ds, s, mut v, t) = fixture();
        v = v.into_iter().filter(|(k, _)| k.index != 3).collect();
        let err = run(&ds, &SchedulerConfig::default(), &mut backends(&s, &v, &t, false)).unwrap_err();
        assert!(matches!(err, Error::Pipeline { round: 2, ref at, .. } if at == "frame v#3"), "{err}");
    }
}
