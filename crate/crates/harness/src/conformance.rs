//! Conformance checks for external backends: handshake, request/response
//! shapes, id echo, error handling and clean shutdown.

use std::fmt;

use odd_core::{FrameKey, FrameRecord};

use crate::protocol::{
    boxes_to_detections, FrameRequest, ProtocolError, ProtocolErrorKind, Reply, Request, Session, Timeouts, Transport,
};
use crate::transport::ChildTransport;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConformanceReport {
    pub backend: String,
    pub capabilities: Vec<String>,
    pub cases: Vec<CaseResult>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.passed)
    }
}

impl fmt::Display for ConformanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "backend {:?} capabilities {:?}", self.backend, self.capabilities)?;
        for c in &self.cases {
            let mark = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{mark} {:<20} {}", c.name, c.detail)?;
        }
        Ok(())
    }
}

struct Checker<T: Transport> {
    session: Session<T>,
    cases: Vec<CaseResult>,
}

impl<T: Transport> Checker<T> {
    fn record(&mut self, name: &'static str, outcome: Result<String, String>) {
        let (passed, detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        self.cases.push(CaseResult { name, passed, detail });
    }

    /// Sends a raw line that must be answered by an error carrying `want_id`.
    fn expect_error(&mut self, line: &str, want_id: Option<u64>) -> Result<String, String> {
        let reply = self.session.exchange_raw(line).map_err(|e| e.to_string())?;
        match Reply::decode(&reply) {
            Ok(Reply::Error { id, message }) if id == want_id => Ok(format!("error: {message}")),
            Ok(Reply::Error { id, .. }) => Err(format!("error response carried id {id:?}, expected {want_id:?}")),
            Ok(other) => Err(format!("expected an error response, got {}", other.type_name())),
            Err(e) => Err(format!("undecodable response: {e}")),
        }
    }

    fn frame_call(&mut self, kind: &str, probe: &FrameRecord, known: bool) -> Result<String, String> {
        let id = self.session.reserve_id();
        let req = FrameRequest {
            id,
            video_id: probe.key.video_id.clone(),
            index: probe.key.index,
            image_path: probe.image_path.clone(),
        };
        let line = if kind == "detect" { Request::Detect(req) } else { Request::Score(req) }.encode();
        let reply = self.session.exchange_raw(&line).map_err(|e| e.to_string())?;
        match Reply::decode(&reply).map_err(|e| format!("undecodable response: {e}"))? {
            r if r.id() != Some(id) => Err(format!("response id {:?} does not echo {id}", r.id())),
            Reply::Detections { boxes, .. } if kind == "detect" => {
                boxes_to_detections(&boxes).map_err(|k| k.to_string())?;
                Ok(format!("{} boxes", boxes.len()))
            }
            Reply::ScoreValue { value, .. } if kind == "score" => {
                if (0.0..=1.0).contains(&value) {
                    Ok(format!("score {value}"))
                } else {
                    Err(format!("score {value} outside [0, 1]"))
                }
            }
            Reply::Error { message, .. } if !known => Ok(format!("unknown frame answered with error: {message}")),
            other => Err(format!("unexpected {} response", other.type_name())),
        }
    }
}

fn describe(e: &ProtocolError) -> String {
    match &e.kind {
        ProtocolErrorKind::Handshake(line) => format!("first line is not a hello: {line:?}"),
        k => k.to_string(),
    }
}

/// Runs the suite over any transport. `probe` is a frame the backend is
/// expected to know; without one a synthetic frame is used and an error
/// answer to it is accepted.
pub fn check_transport<T: Transport>(transport: T, probe: Option<&FrameRecord>, timeouts: Timeouts) -> ConformanceReport {
    let session = match Session::open(transport, timeouts) {
        Ok(s) => s,
        Err(e) => {
            return ConformanceReport {
                backend: String::new(),
                capabilities: Vec::new(),
                cases: vec![CaseResult { name: "hello", passed: false, detail: describe(&e) }],
            }
        }
    };
    let backend = session.name().to_string();
    let capabilities = session.capabilities().to_vec();
    let mut c = Checker { session, cases: Vec::new() };
    c.record("hello", Ok(format!("capabilities {capabilities:?}")));

    let synthetic = FrameRecord { key: FrameKey::new("__conformance__", 0), ground_truth: Vec::new(), image_path: None };
    let (probe, known) = match probe {
        Some(p) => (p, true),
        None => (&synthetic, false),
    };
    let has = |cap: &str| capabilities.iter().any(|c| c == cap);

    if has("detect") {
        let r = c.frame_call("detect", probe, known);
        c.record("detect", r);
    }
    if has("score") {
        let r = c.frame_call("score", probe, known);
        c.record("score", r);
    }
    let id = c.session.reserve_id();
    let r = c.expect_error(&format!(r#"{{"id":{id},"type":"conformance_probe"}}"#), Some(id));
    c.record("unknown type", r);
    let r = c.expect_error("this line is not JSON", None);
    c.record("malformed line", r);
    let id = c.session.reserve_id();
    let r = c.expect_error(&format!(r#"{{"id":{id},"type":"conformance_probe"}}"#), Some(id));
    c.record("alive after errors", r);
    if has("global_pool") {
        let frames = [probe.key.index];
        let first = c.session.set_global_pool(&probe.key.video_id, &frames);
        let second = c.session.set_global_pool(&probe.key.video_id, &frames);
        let r = match first.and(second) {
            Ok(()) => Ok("acknowledged twice".into()),
            Err(e) => Err(e.kind.to_string()),
        };
        c.record("global pool", r);
    }
    let Checker { session, mut cases } = c;
    let r = session.shutdown().map(|()| "exited 0".to_string()).map_err(|e| e.kind.to_string());
    let (passed, detail) = match r {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    cases.push(CaseResult { name: "shutdown", passed, detail });
    ConformanceReport { backend, capabilities, cases }
}

/// Spawns `command` and runs the suite against it.
pub fn backend_check(command: &str, probe: Option<&FrameRecord>, timeouts: Timeouts) -> std::io::Result<ConformanceReport> {
    Ok(check_transport(ChildTransport::spawn(command)?, probe, timeouts))
}
