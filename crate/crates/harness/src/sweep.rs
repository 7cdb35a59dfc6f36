//! Threshold sweeps, SIOD proportion tables and metric ablations.

use std::io;
use std::thread;

use odd_core::{
    evaluate, label_dataset, lossless_rate, proportion_below, summarize, CostModel, DetectionDump, EvalConfig,
    MetricConfig, PoolConfig, RatePoint, ScoreTable, Summary, VideoDataset,
};
use serde::{Deserialize, Serialize};

use crate::scheduler::{run_measured, Backends, MeasuredSpeed, RunReport, SchedulerConfig};
use crate::{Error, Result};

/// Threshold of the pure-VOD baseline row.
pub const BASELINE_THRESHOLD: f64 = 0.0;
/// Threshold of the pure-SIOD row; above any valid score.
pub const SIOD_ONLY_THRESHOLD: f64 = 1.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Baseline,
    Grid,
    SiodOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kind: RowKind,
    pub threshold: f64,
    pub mean_ap: f64,
    pub n_siod: usize,
    pub n_vod: usize,
    pub proportion_siod: f64,
    pub modeled_fps: f64,
    pub measured_fps: Option<f64>,
    pub lossless: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    /// Grid rows, highest threshold first.
    pub rows: Vec<SweepRow>,
    pub baseline: SweepRow,
    pub siod_only: SweepRow,
    /// Percent speed-up of the fastest lossless grid row over the baseline.
    pub lossless_rate: Option<f64>,
}

impl SweepReport {
    fn assemble(mut rows: Vec<SweepRow>, mut baseline: SweepRow, mut siod_only: SweepRow) -> Result<Self> {
        baseline.lossless = true;
        for r in rows.iter_mut() {
            r.lossless = r.mean_ap >= baseline.mean_ap;
        }
        siod_only.lossless = siod_only.mean_ap >= baseline.mean_ap;
        let points: Vec<RatePoint> = rows.iter().map(|r| RatePoint::new(r.mean_ap, r.modeled_fps)).collect();
        let lossless_rate = lossless_rate(&points, RatePoint::new(baseline.mean_ap, baseline.modeled_fps))?;
        Ok(SweepReport { rows, baseline, siod_only, lossless_rate })
    }

    /// Baseline, grid rows, then the SIOD-only row.
    pub fn all_rows(&self) -> impl Iterator<Item = &SweepRow> {
        std::iter::once(&self.baseline).chain(&self.rows).chain(std::iter::once(&self.siod_only))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub thresholds: Vec<f64>,
    pub pool: Option<PoolConfig>,
    pub cost: CostModel,
    pub eval: EvalConfig,
    /// Independent backend sets to run points on; 1 runs sequentially.
    pub parallel: usize,
    pub measure_latency: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            thresholds: odd_core::DEFAULT_THRESHOLDS.to_vec(),
            pool: None,
            cost: CostModel::default(),
            eval: EvalConfig::default(),
            parallel: 1,
            measure_latency: false,
        }
    }
}

struct Point {
    kind: RowKind,
    threshold: f64,
}

struct Outcome {
    report: RunReport,
    measured: MeasuredSpeed,
    mean_ap: f64,
}

fn run_points(ds: &VideoDataset, cfg: &SweepConfig, points: &[&Point], backends: &mut Backends) -> Result<Vec<Outcome>> {
    points
        .iter()
        .map(|p| {
            let sc = SchedulerConfig { threshold: p.threshold, pool: cfg.pool, cost: cfg.cost };
            let (report, measured) = run_measured(ds, &sc, backends)?;
            let mean_ap = evaluate(ds, &report.merged, &cfg.eval)?.mean_ap;
            log::info!("threshold {}: {} SIOD / {} VOD, mAP {mean_ap:.4}", p.threshold, report.n_siod, report.n_vod);
            Ok(Outcome { report, measured, mean_ap })
        })
        .collect()
}

fn with_backends<T>(open: &(dyn Fn() -> Result<Backends> + Sync), f: impl FnOnce(&mut Backends) -> Result<T>) -> Result<T> {
    let mut backends = open()?;
    let out = f(&mut backends);
    let closed = backends.shutdown();
    let out = out?;
    closed?;
    Ok(out)
}

/// Runs the pipeline at the baseline, every grid threshold and the SIOD-only
/// point, evaluating each merged dump. `observe` sees every run report in row
/// order (baseline, grid descending, SIOD-only).
pub fn sweep(
    ds: &VideoDataset,
    cfg: &SweepConfig,
    open: &(dyn Fn() -> Result<Backends> + Sync),
    observe: &mut dyn FnMut(&RunReport),
) -> Result<SweepReport> {
    cfg.eval.validate()?;
    if cfg.thresholds.iter().any(|t| t.is_nan()) {
        return Err(Error::Config("threshold grid contains NaN".into()));
    }
    let mut grid = cfg.thresholds.clone();
    grid.sort_by(|a, b| b.total_cmp(a));
    let mut points = vec![Point { kind: RowKind::Baseline, threshold: BASELINE_THRESHOLD }];
    points.extend(grid.iter().map(|&threshold| Point { kind: RowKind::Grid, threshold }));
    points.push(Point { kind: RowKind::SiodOnly, threshold: SIOD_ONLY_THRESHOLD });

    let lanes = cfg.parallel.clamp(1, points.len());
    let outcomes: Vec<Outcome> = if lanes == 1 {
        let all: Vec<&Point> = points.iter().collect();
        with_backends(open, |b| run_points(ds, cfg, &all, b))?
    } else {
        // lane i takes points i, i + lanes, ...
        let results: Vec<Result<Vec<Outcome>>> = thread::scope(|s| {
            let handles: Vec<_> = (0..lanes)
                .map(|lane| {
                    let mine: Vec<&Point> = points.iter().skip(lane).step_by(lanes).collect();
                    s.spawn(move || with_backends(open, |b| run_points(ds, cfg, &mine, b)))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("sweep lane panicked")).collect()
        });
        let mut lanes_out = Vec::with_capacity(lanes);
        for r in results {
            lanes_out.push(r?.into_iter());
        }
        (0..points.len()).map(|i| lanes_out[i % lanes].next().expect("lane produced every point")).collect()
    };

    let mut rows = Vec::with_capacity(points.len());
    for (p, o) in points.iter().zip(&outcomes) {
        observe(&o.report);
        rows.push(SweepRow {
            kind: p.kind,
            threshold: p.threshold,
            mean_ap: o.mean_ap,
            n_siod: o.report.n_siod,
            n_vod: o.report.n_vod,
            proportion_siod: o.report.proportion_siod,
            modeled_fps: o.report.modeled_fps,
            measured_fps: if cfg.measure_latency { o.measured.fps() } else { None },
            lossless: false,
        });
    }
    let siod_only = rows.pop().expect("siod-only row");
    let baseline = rows.remove(0);
    SweepReport::assemble(rows, baseline, siod_only)
}

pub fn write_csv<W: io::Write>(report: &SweepReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in report.all_rows() {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// Reads a CSV written by [`write_csv`]; the lossless flags and rate are
/// recomputed and must agree with the file.
pub fn read_csv<R: io::Read>(input: R) -> Result<SweepReport> {
    let mut r = csv::Reader::from_reader(input);
    let mut baseline = None;
    let mut siod_only = None;
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        let row: SweepRow = rec?;
        match row.kind {
            RowKind::Baseline => baseline = Some(row),
            RowKind::SiodOnly => siod_only = Some(row),
            RowKind::Grid => rows.push(row),
        }
    }
    let missing = |what: &str| Error::Config(format!("sweep CSV has no {what} row"));
    let report = SweepReport::assemble(
        rows.clone(),
        baseline.clone().ok_or_else(|| missing("baseline"))?,
        siod_only.clone().ok_or_else(|| missing("siod_only"))?,
    )?;
    if report.rows != rows || Some(&report.baseline) != baseline.as_ref() || Some(&report.siod_only) != siod_only.as_ref() {
        return Err(Error::Config("sweep CSV lossless flags disagree with its mean_ap column".into()));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProportionRow {
    pub threshold: f64,
    pub proportion_siod: f64,
}

/// Fraction of frames whose score is below each threshold.
pub fn proportion_table(scores: &ScoreTable, thresholds: &[f64]) -> Result<Vec<ProportionRow>> {
    let values: Vec<f64> = scores.values().copied().collect();
    thresholds
        .iter()
        .map(|&threshold| Ok(ProportionRow { threshold, proportion_siod: proportion_below(&values, threshold)? }))
        .collect()
}

/// Formats a fraction as a percentage with one decimal, rounding half away
/// from zero.
pub fn percent_1dp(fraction: f64) -> String {
    let tenths = (fraction * 1000.0).round() / 10.0;
    format!("{tenths:.1}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: &'static str,
    pub config: MetricConfig,
    pub summary: Summary,
}

/// Difficulty distribution of the dataset under each category toggle setting.
pub fn ablation_run(ds: &VideoDataset, dump: &DetectionDump, base: MetricConfig) -> Result<Vec<AblationRow>> {
    if ds.is_empty() {
        return Err(odd_core::Error::Empty("dataset").into());
    }
    base.ablation_variants()
        .into_iter()
        .map(|(variant, config)| {
            let labels = label_dataset(ds, dump, &config)?;
            let values: Vec<f64> = labels.scores.values().copied().collect();
            Ok(AblationRow { variant, config, summary: summarize(&values)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_rounds_half_away_from_zero() {
        assert_eq!(percent_1dp(0.396), "39.6");
        assert_eq!(percent_1dp(0.0125), "1.3");
        assert_eq!(percent_1dp(0.0), "0.0");
        assert_eq!(percent_1dp(1.0), "100.0");
    }

    #[test]
    fn proportions_count_strictly_below() {
        let t: ScoreTable = (0..10u64).map(|i| (odd_core::FrameKey::new("v", i), i as f64 / 10.0)).collect();
        let rows = proportion_table(&t, &[0.3, 0.0, 1.0]).unwrap();
        assert_eq!(rows[0].proportion_siod, 0.3);
        assert_eq!(rows[1].proportion_siod, 0.0);
        assert_eq!(rows[2].proportion_siod, 1.0);
        assert!(proportion_table(&ScoreTable::new(), &[0.5]).is_err());
    }

    #[test]
    fn ablation_refuses_empty_datasets() {
        assert!(ablation_run(&VideoDataset::default(), &DetectionDump::new(), MetricConfig::default()).is_err());
    }
}
