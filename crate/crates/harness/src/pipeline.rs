//! Turning command-line descriptors into ready-to-run backend sets.

use std::sync::Arc;

use odd_core::MetricConfig;

use crate::backend::{spawn_backend, BackendDescriptor, DetectorBackend, ReplayBackend};
use crate::formats::{read_dump, read_scores};
use crate::protocol::Timeouts;
use crate::scheduler::{Backends, Scores};
use crate::scores::{BackendScores, FileScores, OracleScores, ScoreSource, ScoreSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSpec {
    pub siod: BackendDescriptor,
    pub vod: BackendDescriptor,
    pub scores: ScoreSpec,
    pub metric: MetricConfig,
    pub timeouts: Timeouts,
}

enum Loaded {
    Replay(ReplayBackend),
    Exec(String),
}

impl Loaded {
    fn new(desc: &BackendDescriptor) -> Result<Self> {
        Ok(match (desc.load_replay()?, desc) {
            (Some(b), _) => Loaded::Replay(b),
            (None, BackendDescriptor::Exec { command }) => Loaded::Exec(command.clone()),
            (None, BackendDescriptor::Replay { .. }) => unreachable!("replay descriptors always load"),
        })
    }

    fn open(&self, timeouts: Timeouts) -> Result<Box<dyn DetectorBackend>> {
        match self {
            Loaded::Replay(b) => Ok(Box::new(b.clone())),
            Loaded::Exec(cmd) => spawn_backend(cmd, timeouts),
        }
    }
}

enum LoadedScores {
    File(FileScores),
    Oracle(OracleScores),
    Exec(String),
    Siod,
}

/// Files parsed once; [`Prepared::open`] then hands out fresh backend sets,
/// spawning new processes for subprocess backends each time.
pub struct Prepared {
    siod: Loaded,
    vod: Loaded,
    scores: LoadedScores,
    timeouts: Timeouts,
}

impl PipelineSpec {
    pub fn prepare(&self) -> Result<Prepared> {
        let siod = Loaded::new(&self.siod)?;
        let vod = Loaded::new(&self.vod)?;
        let scores = match &self.scores {
            ScoreSpec::File(path) => {
                LoadedScores::File(FileScores::new(Arc::new(read_scores(path)?), path.display().to_string()))
            }
            ScoreSpec::Oracle(Some(path)) => LoadedScores::Oracle(OracleScores::new(Arc::new(read_dump(path)?), self.metric)?),
            ScoreSpec::Oracle(None) => match &self.siod {
                BackendDescriptor::Replay { dump, .. } => {
                    LoadedScores::Oracle(OracleScores::new(Arc::new(read_dump(dump)?), self.metric)?)
                }
                BackendDescriptor::Exec { .. } => {
                    return Err(Error::Config("oracle scores need a dump: use oracle:<dump> with a subprocess SIOD".into()))
                }
            },
            ScoreSpec::Exec(cmd) => LoadedScores::Exec(cmd.clone()),
            ScoreSpec::Siod => LoadedScores::Siod,
        };
        Ok(Prepared { siod, vod, scores, timeouts: self.timeouts })
    }
}

impl Prepared {
    /// Whether every backend is a replay, so several sets can run side by side.
    pub fn all_replay(&self) -> bool {
        matches!((&self.siod, &self.vod), (Loaded::Replay(_), Loaded::Replay(_))) && !matches!(self.scores, LoadedScores::Exec(_))
    }

    pub fn open(&self) -> Result<Backends> {
        let scores = match &self.scores {
            LoadedScores::File(f) => Scores::Source(Box::new(f.clone()) as Box<dyn ScoreSource>),
            LoadedScores::Oracle(o) => Scores::Source(Box::new(o.clone())),
            LoadedScores::Exec(cmd) => Scores::Source(Box::new(BackendScores::new(spawn_backend(cmd, self.timeouts)?)?)),
            LoadedScores::Siod => Scores::FromSiod,
        };
        Ok(Backends::new(scores, self.siod.open(self.timeouts)?, self.vod.open(self.timeouts)?))
    }
}
