use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use odd_core::{
    evaluate, frame_diff, label_dataset, lossless_rate, select_pool, validate_dataset, validate_dump, CostModel,
    EvalConfig, EvalReport, GlobalPool, Interpolation, MetricConfig, PoolConfig, RatePoint, VideoDataset,
    DEFAULT_THRESHOLDS,
};
use odd_harness::backend::BackendDescriptor;
use odd_harness::conformance::backend_check;
use odd_harness::config::expand_argv;
use odd_harness::fixtures::{make_fixtures, FixtureSpec};
use odd_harness::formats::{
    dump_from_doc, pools_to_string, read_dataset, read_dataset_unchecked, read_dump, read_scores, videos_in_scores,
    write_dump, write_json, write_scores, DumpDoc,
};
use odd_harness::pipeline::PipelineSpec;
use odd_harness::protocol::Timeouts;
use odd_harness::scheduler::{run_measured, SchedulerConfig};
use odd_harness::scores::ScoreSpec;
use odd_harness::sweep::{ablation_run, percent_1dp, proportion_table, read_csv, sweep, write_csv, SweepConfig};
use odd_harness::{Error, Result};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "odd", version, about = "Object detection difficulty scoring and hybrid detector scheduling")]
struct Cli {
    /// JSON file of flag values keyed by subcommand; typed flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a dataset and optional detection dumps against every invariant.
    #[command(args_override_self = true)]
    Validate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        detections: Vec<PathBuf>,
    },
    /// Write the ground-truth difficulty of every frame of a dump.
    #[command(args_override_self = true)]
    Label {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        metric: MetricArgs,
    },
    /// mAP of a dump, with an optional per-frame comparison to a second dump.
    #[command(args_override_self = true)]
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[command(flatten)]
        eval: EvalArgs,
        /// Write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Second dump for a per-frame TP/FP/FN comparison.
        #[arg(long, requires = "frame_diff")]
        compare: Option<PathBuf>,
        /// CSV destination for the comparison.
        #[arg(long, requires = "compare")]
        frame_diff: Option<PathBuf>,
    },
    /// Run the hybrid pipeline at one threshold.
    #[command(args_override_self = true)]
    Schedule {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        threshold: f64,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        eval: EvalArgs,
        /// Merged detections in dump format.
        #[arg(long)]
        out_dump: Option<PathBuf>,
        /// Run report as JSON.
        #[arg(long)]
        out_report: Option<PathBuf>,
    },
    /// Run the pipeline over a threshold grid plus pure-VOD and pure-SIOD rows.
    #[command(args_override_self = true)]
    Sweep {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_THRESHOLDS.to_vec())]
        thresholds: Vec<f64>,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        eval: EvalArgs,
        /// Independent backend sets; replay backends only.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pick the k lowest-difficulty frames of each video as reference pools.
    #[command(name = "select-global", args_override_self = true)]
    SelectGlobal {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Pick k random frames per video instead, seeded.
        #[arg(long)]
        random_baseline: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lossless acceleration rate from a sweep CSV or from mAP:FPS pairs.
    #[command(args_override_self = true)]
    Lossless {
        #[arg(long, conflicts_with_all = ["baseline", "row"])]
        csv: Option<PathBuf>,
        /// Pure-VOD result as MAP:FPS.
        #[arg(long, value_parser = parse_point, requires = "row")]
        baseline: Option<RatePoint>,
        /// One threshold's result as MAP:FPS; repeatable.
        #[arg(long, value_parser = parse_point)]
        row: Vec<RatePoint>,
    },
    /// Share of frames each threshold would send to the fast detector.
    #[command(args_override_self = true)]
    Proportion {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_THRESHOLDS.to_vec())]
        thresholds: Vec<f64>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Difficulty distribution with each match category switched on or off.
    #[command(args_override_self = true)]
    Ablation {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[command(flatten)]
        metric: MetricArgs,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Generate a synthetic dataset with fast and slow detector dumps.
    #[command(args_override_self = true)]
    Fixtures {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        videos: usize,
        #[arg(long, default_value_t = 30)]
        frames: usize,
        #[arg(long, default_value_t = 3)]
        max_objects: usize,
    },
    /// Run the protocol conformance suite against a backend command.
    #[command(name = "backend-check", args_override_self = true)]
    BackendCheck {
        /// Shell command starting the backend.
        command: String,
        /// Probe with this dataset's first frame instead of a synthetic one.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Seconds to wait for each response.
        #[arg(long, default_value_t = 30.0)]
        request_timeout: f64,
    },
}

#[derive(Args)]
struct MetricArgs {
    #[arg(long, default_value_t = 0.3)]
    t_near: f64,
    #[arg(long, default_value_t = 0.5)]
    t_pos: f64,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long)]
    no_near_positive: bool,
    #[arg(long)]
    no_multi_positive: bool,
}

impl MetricArgs {
    fn config(&self) -> Result<MetricConfig> {
        let cfg = MetricConfig {
            t_near: self.t_near,
            t_pos: self.t_pos,
            epsilon: self.epsilon,
            use_near_positive: !self.no_near_positive,
            use_multi_positive: !self.no_multi_positive,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum InterpArg {
    AllPoint,
    Eleven,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    #[arg(long, value_enum, default_value = "all-point")]
    interpolation: InterpArg,
}

impl EvalArgs {
    fn config(&self) -> Result<EvalConfig> {
        let interpolation = match self.interpolation {
            InterpArg::AllPoint => Interpolation::AllPoint,
            InterpArg::Eleven => Interpolation::Eleven,
        };
        let cfg = EvalConfig { iou_threshold: self.iou, interpolation };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct PipelineArgs {
    /// Fast detector: replay:<dump>[,scores=<file>][,global_pool] or exec:<command>.
    #[arg(long)]
    siod: BackendDescriptor,
    /// Video detector, same forms as --siod.
    #[arg(long)]
    vod: BackendDescriptor,
    /// Score file, oracle, oracle:<dump>, exec:<command> or siod.
    #[arg(long)]
    scores: ScoreSpec,
    /// Announce the k lowest-difficulty frames of each video to the VOD backend.
    #[arg(long)]
    pool_k: Option<usize>,
    /// Per-frame costs, e.g. siod=131.63,vod=324.2,score=0.13.
    #[arg(long, value_parser = parse_cost, default_value = "siod=131.63,vod=324.2,score=0.13")]
    cost_model: CostModel,
    /// Also report wall-clock speed of backend calls.
    #[arg(long)]
    measure_latency: bool,
    #[command(flatten)]
    metric: MetricArgs,
}

impl PipelineArgs {
    fn spec(&self) -> Result<PipelineSpec> {
        Ok(PipelineSpec {
            siod: self.siod.clone(),
            vod: self.vod.clone(),
            scores: self.scores.clone(),
            metric: self.metric.config()?,
            timeouts: Timeouts::default(),
        })
    }

    fn pool(&self) -> Result<Option<PoolConfig>> {
        Ok(self.pool_k.map(PoolConfig::new).transpose()?)
    }
}

fn parse_cost(s: &str) -> std::result::Result<CostModel, String> {
    let mut cm = CostModel::default();
    for part in s.split(',').filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| format!("expected key=value, got {part:?}"))?;
        let v: f64 = v.parse().map_err(|e| format!("{k}: {e}"))?;
        match k.trim() {
            "siod" => cm.siod_cost = v,
            "vod" => cm.vod_cost = v,
            "score" => cm.score_cost = v,
            other => return Err(format!("unknown cost {other:?}, expected siod, vod or score")),
        }
    }
    cm.validate().map_err(|e| e.to_string())?;
    Ok(cm)
}

fn parse_point(s: &str) -> std::result::Result<RatePoint, String> {
    let (m, f) = s.split_once(':').ok_or_else(|| format!("expected MAP:FPS, got {s:?}"))?;
    let mean_ap = m.trim().parse().map_err(|e| format!("mAP {m:?}: {e}"))?;
    let fps = f.trim().parse().map_err(|e| format!("fps {f:?}: {e}"))?;
    Ok(RatePoint::new(mean_ap, fps))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

fn print_eval(report: &EvalReport) {
    println!("{:<20} {:>8}", "label", "AP");
    for (label, ap) in &report.per_label {
        println!("{label:<20} {ap:>8.4}");
    }
    println!("{:<20} {:>8.4}", "mean", report.mean_ap);
}

#[derive(Serialize)]
struct FrameCountsDoc {
    video_id: String,
    index: u64,
    true_positives: usize,
    false_positives: usize,
    false_negatives: usize,
}

#[derive(Serialize)]
struct EvalReportDoc<'a> {
    mean_ap: f64,
    per_label: &'a std::collections::BTreeMap<String, f64>,
    frames: Vec<FrameCountsDoc>,
}

#[derive(Serialize)]
struct FrameDiffCsv<'a> {
    video_id: &'a str,
    index: u64,
    a_tp: usize,
    a_fp: usize,
    a_fn: usize,
    b_tp: usize,
    b_fp: usize,
    b_fn: usize,
}

fn cmd_validate(dataset: &Path, dumps: &[PathBuf]) -> Result<()> {
    let ds = read_dataset_unchecked(dataset)?;
    let mut all = Vec::new();
    let problems = validate_dataset(&ds);
    report_file(dataset, &problems, &format!("{} videos, {} frames", ds.videos.len(), ds.frame_count()));
    all.extend(problems);
    for path in dumps {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: DumpDoc =
            serde_json::from_str(&text).map_err(|source| Error::Parse { origin: path.display().to_string(), source })?;
        let (dump, mut problems) = dump_from_doc(doc);
        problems.extend(validate_dump(&dump));
        for key in ds.unknown_keys(&dump) {
            problems.push(odd_core::Violation {
                key: Some(key),
                field: "detections".into(),
                message: "frame is not in the dataset".into(),
            });
        }
        report_file(path, &problems, &format!("{} frames", dump.len()));
        all.extend(problems);
    }
    if all.is_empty() {
        Ok(())
    } else {
        Err(Error::Invalid { origin: "validation".into(), violations: all })
    }
}

fn report_file(path: &Path, problems: &[odd_core::Violation], summary: &str) {
    if problems.is_empty() {
        println!("{}: ok ({summary})", path.display());
    } else {
        println!("{}: {} violation(s)", path.display(), problems.len());
    }
}

fn cmd_schedule(
    dataset: &Path,
    threshold: f64,
    pipeline: &PipelineArgs,
    eval: &EvalArgs,
    out_dump: Option<&Path>,
    out_report: Option<&Path>,
) -> Result<()> {
    let ds = read_dataset(dataset)?;
    let eval_cfg = eval.config()?;
    let prepared = pipeline.spec()?.prepare()?;
    let cfg = SchedulerConfig { threshold, pool: pipeline.pool()?, cost: pipeline.cost_model };
    let mut backends = prepared.open()?;
    let outcome = run_measured(&ds, &cfg, &mut backends);
    let closed = backends.shutdown();
    let (report, measured) = outcome?;
    closed?;
    let mean_ap = evaluate(&ds, &report.merged, &eval_cfg)?.mean_ap;
    println!("threshold        {threshold}");
    println!("frames           {} SIOD / {} VOD ({}% SIOD)", report.n_siod, report.n_vod, percent_1dp(report.proportion_siod));
    println!("modeled cost     {:.3}", report.modeled_total_cost);
    println!("modeled fps      {:.6}", report.modeled_fps);
    println!("mAP              {mean_ap:.4}");
    let measured_fps = if pipeline.measure_latency { measured.fps() } else { None };
    if pipeline.measure_latency {
        match measured.fps() {
            Some(fps) => println!("measured fps     {fps:.3}"),
            None => println!("measured fps     n/a"),
        }
        if let Some(cm) = measured.cost_model(&report) {
            println!(
                "measured costs   siod={:.6}s vod={:.6}s score={:.6}s",
                cm.siod_cost, cm.vod_cost, cm.score_cost
            );
        }
    }
    if let Some(p) = out_dump {
        write_dump(p, &report.merged)?;
    }
    if let Some(p) = out_report {
        write_json(p, &report.to_doc(measured_fps))?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    dataset: &Path,
    thresholds: &[f64],
    pipeline: &PipelineArgs,
    eval: &EvalArgs,
    parallel: usize,
    out: Option<&Path>,
) -> Result<()> {
    let ds = read_dataset(dataset)?;
    let prepared = pipeline.spec()?.prepare()?;
    let parallel = if parallel > 1 && !prepared.all_replay() {
        log::warn!("--parallel needs replay backends; running sequentially");
        1
    } else {
        parallel
    };
    let cfg = SweepConfig {
        thresholds: thresholds.to_vec(),
        pool: pipeline.pool()?,
        cost: pipeline.cost_model,
        eval: eval.config()?,
        parallel,
        measure_latency: pipeline.measure_latency,
    };
    let start = Instant::now();
    let report = sweep(&ds, &cfg, &|| prepared.open(), &mut |_| {})?;
    log::info!("sweep finished in {:.2?}", start.elapsed());
    println!("{:>10} {:>8} {:>8} {:>12} {:>9}", "threshold", "mAP", "SIOD %", "fps", "lossless");
    for row in report.all_rows() {
        println!(
            "{:>10} {:>8.4} {:>8} {:>12.6} {:>9}",
            row.threshold,
            row.mean_ap,
            percent_1dp(row.proportion_siod),
            row.modeled_fps,
            if row.lossless { "yes" } else { "no" }
        );
    }
    match report.lossless_rate {
        Some(r) => println!("lossless acceleration rate: {r:.1}%"),
        None => println!("lossless acceleration rate: none"),
    }
    if let Some(p) = out {
        write_csv(&report, create(p)?)?;
    }
    Ok(())
}

fn cmd_select_global(scores: &Path, k: usize, random: Option<u64>, out: Option<&Path>) -> Result<()> {
    let table = read_scores(scores)?;
    let cfg = PoolConfig::new(k)?;
    let mut rng = random.map(ChaCha8Rng::seed_from_u64);
    let mut pools = Vec::new();
    for (video, frames) in videos_in_scores(&table) {
        let pool = match rng.as_mut() {
            None => select_pool(&video, &frames, &table, &cfg)?,
            Some(rng) => {
                let mut picked = sample(rng, frames.len(), k.min(frames.len())).into_vec();
                picked.sort_unstable();
                let frames: Vec<_> = picked.into_iter().map(|i| frames[i].clone()).collect();
                let scores = frames.iter().map(|f| table.get(f).copied().unwrap_or(f64::NAN)).collect();
                GlobalPool { video_id: video, frames, scores }
            }
        };
        pools.push(pool);
    }
    let text = pools_to_string(&pools);
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_lossless(csv: Option<&Path>, baseline: Option<RatePoint>, rows: &[RatePoint]) -> Result<()> {
    let rate = match (csv, baseline) {
        (Some(p), _) => read_csv(File::open(p).map_err(|e| Error::io(p, e))?)?.lossless_rate,
        (None, Some(b)) => lossless_rate(rows, b)?,
        (None, None) => return Err(Error::Config("give --csv or --baseline with --row".into())),
    };
    match rate {
        Some(r) => println!("{r:.1}%"),
        None => println!("none"),
    }
    Ok(())
}

fn cmd_proportion(scores: &Path, thresholds: &[f64], csv: Option<&Path>) -> Result<()> {
    let table = read_scores(scores)?;
    let rows = proportion_table(&table, thresholds)?;
    println!("{:>10} {:>8}", "threshold", "SIOD %");
    for r in &rows {
        println!("{:>10} {:>8}", r.threshold, percent_1dp(r.proportion_siod));
    }
    if let Some(p) = csv {
        let mut w = csv::Writer::from_writer(create(p)?);
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct AblationCsv {
    variant: &'static str,
    count: usize,
    mean: f64,
    min: f64,
    q25: f64,
    median: f64,
    q75: f64,
    max: f64,
}

fn cmd_ablation(dataset: &Path, detections: &Path, metric: &MetricArgs, csv: Option<&Path>) -> Result<()> {
    let ds = read_dataset(dataset)?;
    let dump = read_dump(detections)?;
    let rows = ablation_run(&ds, &dump, metric.config()?)?;
    println!("{:<32} {:>8} {:>8} {:>8} {:>8}", "variant", "mean", "q25", "median", "q75");
    for r in &rows {
        let s = &r.summary;
        println!("{:<32} {:>8.4} {:>8.4} {:>8.4} {:>8.4}", r.variant, s.mean, s.q25, s.median, s.q75);
    }
    if let Some(p) = csv {
        let mut w = csv::Writer::from_writer(create(p)?);
        for r in &rows {
            let s = r.summary;
            w.serialize(AblationCsv {
                variant: r.variant,
                count: s.count,
                mean: s.mean,
                min: s.min,
                q25: s.q25,
                median: s.median,
                q75: s.q75,
                max: s.max,
            })?;
        }
        w.flush().map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

fn cmd_eval(
    dataset: &Path,
    detections: &Path,
    eval: &EvalArgs,
    out: Option<&Path>,
    compare: Option<&Path>,
    diff_out: Option<&Path>,
) -> Result<()> {
    let ds = read_dataset(dataset)?;
    let dump = read_dump(detections)?;
    let cfg = eval.config()?;
    let report = evaluate(&ds, &dump, &cfg)?;
    print_eval(&report);
    if let Some(p) = out {
        let doc = EvalReportDoc {
            mean_ap: report.mean_ap,
            per_label: &report.per_label,
            frames: report
                .frames
                .iter()
                .map(|(k, c)| FrameCountsDoc {
                    video_id: k.video_id.clone(),
                    index: k.index,
                    true_positives: c.true_positives,
                    false_positives: c.false_positives,
                    false_negatives: c.false_negatives,
                })
                .collect(),
        };
        write_json(p, &doc)?;
    }
    if let (Some(other), Some(p)) = (compare, diff_out) {
        let b = read_dump(other)?;
        let rows = frame_diff(&ds, &dump, &b, &cfg)?;
        let mut w = csv::Writer::from_writer(create(p)?);
        for r in &rows {
            w.serialize(FrameDiffCsv {
                video_id: &r.key.video_id,
                index: r.key.index,
                a_tp: r.a.true_positives,
                a_fp: r.a.false_positives,
                a_fn: r.a.false_negatives,
                b_tp: r.b.true_positives,
                b_fp: r.b.false_positives,
                b_fn: r.b.false_negatives,
            })?;
        }
        w.flush().map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

fn cmd_label(dataset: &Path, detections: &Path, out: &Path, metric: &MetricArgs) -> Result<()> {
    let ds = read_dataset(dataset)?;
    let dump = read_dump(detections)?;
    let outcome = label_dataset(&ds, &dump, &metric.config()?)?;
    for key in &outcome.missing {
        log::warn!("frame {key} has no entry in the dump, scored as undetected");
    }
    write_scores(out, &outcome.scores)?;
    println!("labeled {} frames ({} missing from the dump)", outcome.scores.len(), outcome.missing.len());
    Ok(())
}

fn cmd_fixtures(out_dir: &Path, spec: FixtureSpec) -> Result<()> {
    let f = make_fixtures(&spec);
    let paths = f.write(out_dir)?;
    for p in [&paths.dataset, &paths.siod, &paths.vod, &paths.scores] {
        println!("{}", p.display());
    }
    Ok(())
}

fn cmd_backend_check(command: &str, dataset: Option<&Path>, request_timeout: f64) -> Result<i32> {
    let ds: Option<VideoDataset> = dataset.map(read_dataset).transpose()?;
    let probe = ds.as_ref().and_then(|d| d.frames().next());
    let request = Duration::try_from_secs_f64(request_timeout)
        .map_err(|e| Error::Config(format!("--request-timeout: {e}")))?;
    let timeouts = Timeouts { request, ..Timeouts::default() };
    let report = backend_check(command, probe, timeouts).map_err(|e| Error::io(command, e))?;
    print!("{report}");
    std::io::stdout().flush().ok();
    Ok(if report.passed() { 0 } else { 2 })
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Cmd::Validate { dataset, detections } => cmd_validate(&dataset, &detections)?,
        Cmd::Label { dataset, detections, out, metric } => cmd_label(&dataset, &detections, &out, &metric)?,
        Cmd::Eval { dataset, detections, eval, out, compare, frame_diff } => {
            cmd_eval(&dataset, &detections, &eval, out.as_deref(), compare.as_deref(), frame_diff.as_deref())?
        }
        Cmd::Schedule { dataset, threshold, pipeline, eval, out_dump, out_report } => {
            cmd_schedule(&dataset, threshold, &pipeline, &eval, out_dump.as_deref(), out_report.as_deref())?
        }
        Cmd::Sweep { dataset, thresholds, pipeline, eval, parallel, out } => {
            cmd_sweep(&dataset, &thresholds, &pipeline, &eval, parallel, out.as_deref())?
        }
        Cmd::SelectGlobal { scores, k, random_baseline, out } => {
            cmd_select_global(&scores, k, random_baseline, out.as_deref())?
        }
        Cmd::Lossless { csv, baseline, row } => cmd_lossless(csv.as_deref(), baseline, &row)?,
        Cmd::Proportion { scores, thresholds, csv } => cmd_proportion(&scores, &thresholds, csv.as_deref())?,
        Cmd::Ablation { dataset, detections, metric, csv } => cmd_ablation(&dataset, &detections, &metric, csv.as_deref())?,
        Cmd::Fixtures { out_dir, seed, videos, frames, max_objects } => cmd_fixtures(
            &out_dir,
            FixtureSpec { seed, videos, frames_per_video: frames, max_objects, ..Default::default() },
        )?,
        Cmd::BackendCheck { command, dataset, request_timeout } => {
            return cmd_backend_check(&command, dataset.as_deref(), request_timeout)
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ODD_LOG", "warn")).init();
    let argv = match expand_argv(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let cli = Cli::parse_from(argv);
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
