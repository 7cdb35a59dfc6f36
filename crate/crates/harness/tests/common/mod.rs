#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use odd_harness::backend::ReplayBackend;
use odd_harness::fixtures::{make_fixtures, FixturePaths, FixtureSpec, Fixtures};
use odd_harness::protocol::Timeouts;
use odd_harness::scheduler::{Backends, Scores};
use odd_harness::scores::FileScores;
use tempfile::TempDir;

pub struct Workspace {
    pub dir: TempDir,
    pub paths: FixturePaths,
    pub fx: Fixtures,
}

pub fn workspace(spec: FixtureSpec) -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let fx = make_fixtures(&spec);
    let paths = fx.write(dir.path()).unwrap();
    Workspace { dir, paths, fx }
}

pub fn small() -> FixtureSpec {
    FixtureSpec { videos: 3, frames_per_video: 8, ..Default::default() }
}

pub fn stub(args: &str) -> String {
    format!("'{}' {args}", env!("CARGO_BIN_EXE_odd-stub-backend"))
}

pub fn quick() -> Timeouts {
    Timeouts {
        handshake: Duration::from_secs(5),
        request: Duration::from_millis(1500),
        shutdown: Duration::from_millis(1500),
    }
}

/// In-process replay backends over fixtures, scored from the fixture score table.
pub fn replay_backends(fx: &Fixtures, pool: bool) -> Backends {
    let mut vod = ReplayBackend::new("vod", Arc::new(fx.vod.clone()));
    if pool {
        vod = vod.with_global_pool();
    }
    Backends::new(
        Scores::Source(Box::new(FileScores::new(Arc::new(fx.scores.clone()), "fixture"))),
        Box::new(ReplayBackend::new("siod", Arc::new(fx.siod.clone()))),
        Box::new(vod),
    )
}
