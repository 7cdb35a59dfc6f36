mod common;

use std::time::Instant;

use common::{quick, replay_backends, small, stub, workspace};
use odd_core::{FrameKey, FrameRecord, PoolConfig};
use odd_harness::backend::{BackendDescriptor, DetectorBackend, ProtocolBackend};
use odd_harness::conformance::backend_check;
use odd_harness::pipeline::PipelineSpec;
use odd_harness::protocol::{ProtocolErrorKind, Timeouts};
use odd_harness::scheduler::{run, Backends, SchedulerConfig, Scores};
use odd_harness::scores::ScoreSpec;
use odd_harness::transport::ChildTransport;
use odd_harness::Error;

fn connect(args: &str) -> Result<ProtocolBackend<ChildTransport>, odd_harness::protocol::ProtocolError> {
    ProtocolBackend::connect(ChildTransport::spawn(&stub(args)).unwrap(), quick())
}

fn frame(video: &str, index: u64) -> FrameRecord {
    FrameRecord { key: FrameKey::new(video, index), ground_truth: vec![], image_path: None }
}

fn protocol_kind(e: Error) -> ProtocolErrorKind {
    match e {
        Error::Protocol(p) => {
            assert!(!p.transcript.is_empty() && p.transcript.len() <= 5, "{:?}", p.transcript);
            p.kind
        }
        Error::Pipeline { source, .. } => protocol_kind(*source),
        other => panic!("expected a protocol error, got {other}"),
    }
}

#[test]
fn subprocess_pipeline_matches_in_process_replay() {
    let ws = workspace(small());
    let p = &ws.paths;
    let cfg = SchedulerConfig { threshold: 0.3, pool: Some(PoolConfig::new(3).unwrap()), ..Default::default() };
    let spec = PipelineSpec {
        siod: BackendDescriptor::Exec {
            command: stub(&format!("--detections '{}' --scores '{}'", p.siod.display(), p.scores.display())),
        },
        vod: BackendDescriptor::Exec {
            command: stub(&format!("--detections '{}' --global-pool --fault strict-sequential", p.vod.display())),
        },
        scores: ScoreSpec::Siod,
        metric: Default::default(),
        timeouts: Timeouts::default(),
    };
    let prepared = spec.prepare().unwrap();
    let mut remote = prepared.open().unwrap();
    let over_wire = run(&ws.fx.dataset, &cfg, &mut remote).unwrap();
    remote.shutdown().unwrap();
    let native = run(&ws.fx.dataset, &cfg, &mut replay_backends(&ws.fx, true)).unwrap();
    assert_eq!(over_wire, native);
    assert_eq!(over_wire.pools.len(), native.pools.len());
}

#[test]
fn malformed_hello_is_quoted() {
    let err = connect("--fault garbage-hello").unwrap_err();
    assert_eq!(err.kind, ProtocolErrorKind::Handshake("HELLO? anyone there".into()));
    assert!(err.to_string().contains("HELLO? anyone there"));
}

#[test]
fn wrong_ids_scores_and_boxes_are_typed_errors() {
    let ws = workspace(small());
    let d = ws.paths.siod.display();
    let s = ws.paths.scores.display();
    let f = frame("v000", 0);

    let mut b = connect(&format!("--detections '{d}' --fault bad-id")).unwrap();
    assert_eq!(protocol_kind(b.detect(&f).unwrap_err()), ProtocolErrorKind::IdMismatch { expected: 1, got: Some(2) });

    let mut b = connect(&format!("--scores '{s}' --fault out-of-range-score")).unwrap();
    assert!(matches!(protocol_kind(b.score(&f).unwrap_err()), ProtocolErrorKind::Invalid { field, .. } if field == "value"));

    let mut b = connect(&format!("--detections '{d}' --fault bad-confidence")).unwrap();
    let kind = protocol_kind(b.detect(&f).unwrap_err());
    assert!(matches!(kind, ProtocolErrorKind::Invalid { ref field, .. } if field == "boxes[0].score"), "{kind}");

    let mut b = connect(&format!("--detections '{d}'")).unwrap();
    assert!(matches!(protocol_kind(b.detect(&frame("nope", 0)).unwrap_err()), ProtocolErrorKind::Remote(_)));
    assert!(matches!(protocol_kind(b.score(&f).unwrap_err()), ProtocolErrorKind::Unsupported(_)));
    Box::new(b).shutdown().unwrap();
}

#[test]
fn crashes_hangs_and_truncation_abort_with_context() {
    let ws = workspace(small());
    let d = ws.paths.vod.display();
    let cfg = SchedulerConfig { threshold: 0.0, ..Default::default() };

    for (fault, expect_closed) in [("crash", true), ("truncated", false)] {
        let mut backends = replay_backends(&ws.fx, false);
        backends.vod = Box::new(connect(&format!("--detections '{d}' --fault {fault}")).unwrap());
        let err = run(&ws.fx.dataset, &cfg, &mut backends).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(matches!(err, Error::Pipeline { round: 2, ref at, .. } if at == "frame v000#0"), "{err}");
        let kind = protocol_kind(err);
        assert_eq!(matches!(kind, ProtocolErrorKind::Closed), expect_closed, "{fault}: {kind}");
        if !expect_closed {
            assert!(matches!(kind, ProtocolErrorKind::Malformed(_)), "{kind}");
        }
    }

    let mut b = connect(&format!("--detections '{d}' --fault hang")).unwrap();
    let start = Instant::now();
    assert!(matches!(protocol_kind(b.detect(&frame("v000", 0)).unwrap_err()), ProtocolErrorKind::Timeout(_)));
    assert!(start.elapsed() < quick().request * 3);
}

#[test]
fn backend_ignoring_shutdown_is_killed() {
    let b = connect("--fault no-exit").unwrap();
    let start = Instant::now();
    let err = Box::new(b).shutdown().unwrap_err();
    assert!(matches!(protocol_kind(err), ProtocolErrorKind::ShutdownFailed(_)));
    assert!(start.elapsed() < quick().shutdown * 3);
}

#[test]
fn conformance_suite_separates_good_and_bad_backends() {
    let ws = workspace(small());
    let d = ws.paths.vod.display();
    let s = ws.paths.scores.display();
    let probe = ws.fx.dataset.frames().next().unwrap();

    let good = backend_check(&stub(&format!("--detections '{d}' --scores '{s}' --global-pool")), Some(probe), quick()).unwrap();
    assert!(good.passed(), "{good}");
    assert_eq!(good.cases.len(), 8);

    let bare = backend_check(&stub(""), None, quick()).unwrap();
    assert!(bare.passed(), "{bare}");

    for (fault, failing) in [
        ("ignore-unknown", "unknown type"),
        ("out-of-range-score", "score"),
        ("bad-id", "detect"),
        ("garbage-hello", "hello"),
        ("no-exit", "shutdown"),
    ] {
        let r = backend_check(&stub(&format!("--detections '{d}' --scores '{s}' --fault {fault}")), Some(probe), quick()).unwrap();
        assert!(!r.passed(), "{fault} passed:\n{r}");
        assert!(r.cases.iter().any(|c| c.name == failing && !c.passed), "{fault}:\n{r}");
    }
}

#[test]
fn missing_capabilities_fail_before_any_detection() {
    let ws = workspace(small());
    let d = ws.paths.vod.display();
    let mut backends: Backends = replay_backends(&ws.fx, false);
    backends.vod = Box::new(connect(&format!("--detections '{d}'")).unwrap());
    let cfg = SchedulerConfig { pool: Some(PoolConfig::default()), ..Default::default() };
    assert!(matches!(run(&ws.fx.dataset, &cfg, &mut backends), Err(Error::Config(_))));
    backends.scores = Scores::FromSiod;
    assert!(matches!(run(&ws.fx.dataset, &SchedulerConfig::default(), &mut backends), Err(Error::Config(_))));
}
