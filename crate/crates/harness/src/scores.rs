//! Score sources: where the scheduler gets per-frame difficulty.

use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use odd_core::{odd_score, DetectionDump, FrameRecord, MetricConfig, ScoreTable};

use crate::backend::{Capability, DetectorBackend};
use crate::{Error, Result};

pub trait ScoreSource: Send {
    fn describe(&self) -> String;

    fn score(&mut self, frame: &FrameRecord) -> Result<f64>;

    fn shutdown(self: Box<Self>) -> Result<()> {
        Ok(())
    }
}

/// Predicted scores read from a score file.
#[derive(Debug, Clone)]
pub struct FileScores {
    table: Arc<ScoreTable>,
    origin: String,
}

impl FileScores {
    pub fn new(table: Arc<ScoreTable>, origin: impl Into<String>) -> Self {
        FileScores { table, origin: origin.into() }
    }
}

impl ScoreSource for FileScores {
    fn describe(&self) -> String {
        format!("file {}", self.origin)
    }

    fn score(&mut self, frame: &FrameRecord) -> Result<f64> {
        self.table.get(&frame.key).copied().ok_or_else(|| odd_core::Error::MissingScore(frame.key.clone()).into())
    }
}

/// Ground-truth difficulty of a detection dump, computed on demand.
#[derive(Debug, Clone)]
pub struct OracleScores {
    dump: Arc<DetectionDump>,
    cfg: MetricConfig,
}

impl OracleScores {
    pub fn new(dump: Arc<DetectionDump>, cfg: MetricConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(OracleScores { dump, cfg })
    }
}

impl ScoreSource for OracleScores {
    fn describe(&self) -> String {
        "oracle".into()
    }

    fn score(&mut self, frame: &FrameRecord) -> Result<f64> {
        let preds = match self.dump.get(&frame.key) {
            Some(p) => p.as_slice(),
            None => {
                log::warn!("frame {} missing from oracle dump, scoring it as undetected", frame.key);
                &[]
            }
        };
        Ok(odd_score(preds, &frame.ground_truth, &self.cfg).value)
    }
}

/// Scores served by a dedicated backend over the protocol.
pub struct BackendScores {
    backend: Box<dyn DetectorBackend>,
}

impl BackendScores {
    pub fn new(backend: Box<dyn DetectorBackend>) -> Result<Self> {
        if !backend.has(Capability::Score) {
            return Err(Error::Config(format!("score backend {:?} does not advertise score", backend.name())));
        }
        Ok(BackendScores { backend })
    }
}

impl ScoreSource for BackendScores {
    fn describe(&self) -> String {
        format!("backend {}", self.backend.name())
    }

    fn score(&mut self, frame: &FrameRecord) -> Result<f64> {
        self.backend.score(frame)
    }

    fn shutdown(self: Box<Self>) -> Result<()> {
        self.backend.shutdown()
    }
}

/// Command-line form of a score source: a score file path, `oracle`,
/// `oracle:<dump>`, `exec:<command>` or `siod`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScoreSpec {
    File(PathBuf),
    /// Oracle over the given dump, or over the SIOD replay dump when absent.
    Oracle(Option<PathBuf>),
    Exec(String),
    Siod,
}

impl FromStr for ScoreSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "" => return Err(Error::Config("empty score source".into())),
            "oracle" => ScoreSpec::Oracle(None),
            "siod" => ScoreSpec::Siod,
            _ => {
                if let Some(path) = s.strip_prefix("oracle:") {
                    ScoreSpec::Oracle(Some(PathBuf::from(path)))
                } else if let Some(cmd) = s.strip_prefix("exec:") {
                    ScoreSpec::Exec(cmd.to_string())
                } else {
                    ScoreSpec::File(PathBuf::from(s))
                }
            }
        })
    }
}
