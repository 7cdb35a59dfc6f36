//! Detector backends: replayed dumps and wire-protocol subprocesses.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use odd_core::{Detection, DetectionDump, FrameRecord, GlobalPool, ScoreTable};

use crate::formats::{read_dump, read_scores};
use crate::protocol::{ProtocolError, ProtocolErrorKind, Session, Timeouts, Transport};
use crate::transport::ChildTransport;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Capability {
    Detect,
    Score,
    GlobalPool,
}

impl Capability {
    pub fn as_str(self) -> &'static str {
        match self {
            Capability::Detect => "detect",
            Capability::Score => "score",
            Capability::GlobalPool => "global_pool",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "detect" => Some(Capability::Detect),
            "score" => Some(Capability::Score),
            "global_pool" => Some(Capability::GlobalPool),
            _ => None,
        }
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub trait DetectorBackend: Send {
    fn name(&self) -> &str;

    fn capabilities(&self) -> &BTreeSet<Capability>;

    fn has(&self, cap: Capability) -> bool {
        self.capabilities().contains(&cap)
    }

    fn detect(&mut self, frame: &FrameRecord) -> Result<Vec<Detection>>;

    fn score(&mut self, frame: &FrameRecord) -> Result<f64>;

    fn set_global_pool(&mut self, pool: &GlobalPool) -> Result<()>;

    fn shutdown(self: Box<Self>) -> Result<()>;
}

/// Announces a reference pool, refusing backends that never advertised
/// `global_pool`.
pub fn announce_pool(pool: &GlobalPool, backend: &mut dyn DetectorBackend) -> Result<()> {
    if !backend.has(Capability::GlobalPool) {
        return Err(Error::Config(format!(
            "backend {:?} does not advertise global_pool; cannot announce the pool for video {:?}",
            backend.name(),
            pool.video_id
        )));
    }
    backend.set_global_pool(pool)
}

fn unsupported(name: &str, cap: Capability) -> Error {
    Error::Config(format!("backend {name:?} does not advertise {cap}"))
}

/// Serves stored detections (and optionally scores) verbatim.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    name: String,
    dump: Arc<DetectionDump>,
    scores: Option<Arc<ScoreTable>>,
    capabilities: BTreeSet<Capability>,
    acked: BTreeMap<String, Vec<u64>>,
}

impl ReplayBackend {
    pub fn new(name: impl Into<String>, dump: Arc<DetectionDump>) -> Self {
        ReplayBackend {
            name: name.into(),
            dump,
            scores: None,
            capabilities: BTreeSet::from([Capability::Detect]),
            acked: BTreeMap::new(),
        }
    }

    pub fn with_scores(mut self, scores: Arc<ScoreTable>) -> Self {
        self.scores = Some(scores);
        self.capabilities.insert(Capability::Score);
        self
    }

    /// Accept pool announcements. Replay output does not depend on them.
    pub fn with_global_pool(mut self) -> Self {
        self.capabilities.insert(Capability::GlobalPool);
        self
    }

    /// Last pool acknowledged per video, as frame indices.
    pub fn acked_pools(&self) -> &BTreeMap<String, Vec<u64>> {
        &self.acked
    }
}

impl DetectorBackend for ReplayBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> &BTreeSet<Capability> {
        &self.capabilities
    }

    fn detect(&mut self, frame: &FrameRecord) -> Result<Vec<Detection>> {
        self.dump
            .get(&frame.key)
            .cloned()
            .ok_or_else(|| Error::MissingFrame { backend: self.name.clone(), key: frame.key.clone() })
    }

    fn score(&mut self, frame: &FrameRecord) -> Result<f64> {
        let scores = self.scores.as_ref().ok_or_else(|| unsupported(&self.name, Capability::Score))?;
        scores.get(&frame.key).copied().ok_or_else(|| odd_core::Error::MissingScore(frame.key.clone()).into())
    }

    fn set_global_pool(&mut self, pool: &GlobalPool) -> Result<()> {
        if !self.has(Capability::GlobalPool) {
            return Err(unsupported(&self.name, Capability::GlobalPool));
        }
        self.acked.insert(pool.video_id.clone(), pool.frame_indices());
        Ok(())
    }

    fn shutdown(self: Box<Self>) -> Result<()> {
        Ok(())
    }
}

/// A backend reached through the line protocol.
pub struct ProtocolBackend<T: Transport> {
    session: Session<T>,
    capabilities: BTreeSet<Capability>,
}

impl<T: Transport> fmt::Debug for ProtocolBackend<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProtocolBackend").field("session", &self.session).finish()
    }
}

impl<T: Transport> ProtocolBackend<T> {
    pub fn connect(transport: T, timeouts: Timeouts) -> std::result::Result<Self, ProtocolError> {
        let session = Session::open(transport, timeouts)?;
        let mut capabilities = BTreeSet::new();
        for c in session.capabilities() {
            match Capability::parse(c) {
                Some(cap) => {
                    capabilities.insert(cap);
                }
                None => log::warn!("backend {:?} advertises unknown capability {c:?}", session.name()),
            }
        }
        log::info!("backend {:?} ready with {:?}", session.name(), session.capabilities());
        Ok(ProtocolBackend { session, capabilities })
    }

    fn require(&self, cap: Capability) -> Result<()> {
        if self.capabilities.contains(&cap) {
            Ok(())
        } else {
            Err(ProtocolError {
                kind: ProtocolErrorKind::Unsupported(cap.to_string()),
                transcript: self.session.transcript(),
            }
            .into())
        }
    }
}

impl<T: Transport> DetectorBackend for ProtocolBackend<T> {
    fn name(&self) -> &str {
        self.session.name()
    }

    fn capabilities(&self) -> &BTreeSet<Capability> {
        &self.capabilities
    }

    fn detect(&mut self, frame: &FrameRecord) -> Result<Vec<Detection>> {
        self.require(Capability::Detect)?;
        Ok(self.session.detect(&frame.key, frame.image_path.as_deref())?)
    }

    fn score(&mut self, frame: &FrameRecord) -> Result<f64> {
        self.require(Capability::Score)?;
        Ok(self.session.score(&frame.key, frame.image_path.as_deref())?)
    }

    fn set_global_pool(&mut self, pool: &GlobalPool) -> Result<()> {
        self.require(Capability::GlobalPool)?;
        Ok(self.session.set_global_pool(&pool.video_id, &pool.frame_indices())?)
    }

    fn shutdown(self: Box<Self>) -> Result<()> {
        Ok(self.session.shutdown()?)
    }
}

/// Where a backend comes from: `replay:<dump>[,scores=<file>][,global_pool]`
/// or `exec:<shell command>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendDescriptor {
    Replay { dump: PathBuf, scores: Option<PathBuf>, global_pool: bool },
    Exec { command: String },
}

impl FromStr for BackendDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(command) = s.strip_prefix("exec:") {
            if command.trim().is_empty() {
                return Err(Error::Config("exec: backend needs a command".into()));
            }
            return Ok(BackendDescriptor::Exec { command: command.to_string() });
        }
        let rest = s
            .strip_prefix("replay:")
            .ok_or_else(|| Error::Config(format!("backend {s:?} must start with replay: or exec:")))?;
        let mut parts = rest.split(',');
        let dump = parts.next().filter(|p| !p.is_empty()).ok_or_else(|| Error::Config("replay: needs a dump path".into()))?;
        let mut scores = None;
        let mut global_pool = false;
        for opt in parts {
            if let Some(path) = opt.strip_prefix("scores=") {
                scores = Some(PathBuf::from(path));
            } else if opt == "global_pool" {
                global_pool = true;
            } else {
                return Err(Error::Config(format!("unknown replay option {opt:?}")));
            }
        }
        Ok(BackendDescriptor::Replay { dump: PathBuf::from(dump), scores, global_pool })
    }
}

impl BackendDescriptor {
    pub fn is_replay(&self) -> bool {
        matches!(self, BackendDescriptor::Replay { .. })
    }

    pub fn open(&self) -> Result<Box<dyn DetectorBackend>> {
        self.open_with(Timeouts::default())
    }

    /// Parses a replay backend's files; `None` for subprocess backends.
    pub fn load_replay(&self) -> Result<Option<ReplayBackend>> {
        let BackendDescriptor::Replay { dump, scores, global_pool } = self else {
            return Ok(None);
        };
        let mut b = ReplayBackend::new(format!("replay:{}", dump.display()), Arc::new(read_dump(dump)?));
        if let Some(path) = scores {
            b = b.with_scores(Arc::new(read_scores(path)?));
        }
        if *global_pool {
            b = b.with_global_pool();
        }
        Ok(Some(b))
    }

    pub fn open_with(&self, timeouts: Timeouts) -> Result<Box<dyn DetectorBackend>> {
        match self {
            BackendDescriptor::Replay { .. } => Ok(Box::new(self.load_replay()?.expect("replay descriptor"))),
            BackendDescriptor::Exec { command } => spawn_backend(command, timeouts),
        }
    }
}

pub fn spawn_backend(command: &str, timeouts: Timeouts) -> Result<Box<dyn DetectorBackend>> {
    let transport = ChildTransport::spawn(command).map_err(|e| Error::io(command, e))?;
    Ok(Box::new(ProtocolBackend::connect(transport, timeouts)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use odd_core::{BoundingBox, FrameKey};

    fn frame(i: u64) -> FrameRecord {
        FrameRecord { key: FrameKey::new("v", i), ground_truth: vec![], image_path: None }
    }

    #[test]
    fn descriptors_parse() {
        assert_eq!(
            "replay:d.json,scores=s.json,global_pool".parse::<BackendDescriptor>().unwrap(),
            BackendDescriptor::Replay { dump: "d.json".into(), scores: Some("s.json".into()), global_pool: true }
        );
        assert_eq!(
            "exec:python3 -m adapter --mode replay".parse::<BackendDescriptor>().unwrap(),
            BackendDescriptor::Exec { command: "python3 -m adapter --mode replay".into() }
        );
        assert!("replay:".parse::<BackendDescriptor>().is_err());
        assert!("replay:d.json,turbo".parse::<BackendDescriptor>().is_err());
        assert!("grpc://x".parse::<BackendDescriptor>().is_err());
    }

    #[test]
    fn replay_serves_stored_boxes_and_rejects_unknown_frames() {
        let det = Detection::new(BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap(), "cat", 0.1 + 0.2);
        let dump: DetectionDump = [(FrameKey::new("v", 0), vec![det.clone()])].into_iter().collect();
        let mut b = ReplayBackend::new("r", Arc::new(dump));
        assert_eq!(b.detect(&frame(0)).unwrap(), vec![det]);
        assert!(matches!(b.detect(&frame(1)), Err(Error::MissingFrame { .. })));
        assert!(b.score(&frame(0)).is_err());
    }

    #[test]
    fn announcing_needs_the_capability_and_is_idempotent() {
        let pool = GlobalPool { video_id: "v".into(), frames: vec![FrameKey::new("v", 2)], scores: vec![0.1] };
        let mut plain = ReplayBackend::new("r", Arc::default());
        assert!(matches!(announce_pool(&pool, &mut plain), Err(Error::Config(_))));
        let mut b = ReplayBackend::new("r", Arc::default()).with_global_pool();
        announce_pool(&pool, &mut b).unwrap();
        let first = b.acked_pools().clone();
        announce_pool(&pool, &mut b).unwrap();
        assert_eq!(&first, b.acked_pools());
        assert_eq!(first["v"], vec![2]);
    }
}
