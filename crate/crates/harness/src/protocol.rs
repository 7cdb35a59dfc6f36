//! Line-delimited JSON protocol spoken between the host and detector backends.
//!
//! One JSON object per line over the backend's stdin/stdout. The backend
//! greets with `hello`; after that every host request carries a fresh `id`
//! and gets exactly one response echoing it. `shutdown` gets no response, the
//! process exits instead.

use std::collections::VecDeque;
use std::fmt;
use std::time::Duration;

use odd_core::{BoundingBox, Detection, FrameKey};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::formats::BoxDoc;

/// Lines of protocol history kept for error reports.
pub const TRANSCRIPT_LINES: usize = 5;

const TRANSCRIPT_LINE_LIMIT: usize = 240;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timeouts {
    pub handshake: Duration,
    pub request: Duration,
    pub shutdown: Duration,
}

impl Default for Timeouts {
    fn default() -> Self {
        Timeouts {
            handshake: Duration::from_secs(10),
            request: Duration::from_secs(30),
            shutdown: Duration::from_secs(5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolErrorKind {
    #[error("malformed line: {0}")]
    Malformed(String),
    #[error("handshake failed, backend sent {0:?}")]
    Handshake(String),
    #[error("expected a {expected} response, got {got:?}")]
    UnexpectedType { expected: &'static str, got: String },
    #[error("response id {got:?} does not answer request {expected}")]
    IdMismatch { expected: u64, got: Option<u64> },
    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },
    #[error("backend error: {0}")]
    Remote(String),
    #[error("no response within {0:?}")]
    Timeout(Duration),
    #[error("backend closed its output")]
    Closed,
    #[error("backend does not support {0}")]
    Unsupported(String),
    #[error("transport: {0}")]
    Io(String),
    #[error("backend did not shut down cleanly: {0}")]
    ShutdownFailed(String),
}

/// A protocol failure together with the last few lines exchanged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolError {
    pub kind: ProtocolErrorKind,
    pub transcript: Vec<String>,
}

impl fmt::Display for ProtocolError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "protocol: {}", self.kind)?;
        if !self.transcript.is_empty() {
            f.write_str("\n  last lines:")?;
            for line in &self.transcript {
                write!(f, "\n    {line}")?;
            }
        }
        Ok(())
    }
}

impl std::error::Error for ProtocolError {}

// ---- messages ----

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRequest {
    pub id: u64,
    pub video_id: String,
    pub index: u64,
    pub image_path: Option<String>,
}

/// Host to backend.
#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Detect(FrameRequest),
    Score(FrameRequest),
    SetGlobalPool { id: u64, video_id: String, frames: Vec<u64> },
    Shutdown { id: u64 },
}

/// Backend to host.
#[derive(Debug, Clone, PartialEq)]
pub enum Reply {
    Hello { name: String, capabilities: Vec<String> },
    Detections { id: u64, boxes: Vec<BoxDoc> },
    ScoreValue { id: u64, value: f64 },
    Ack { id: u64, frames: Option<Vec<u64>> },
    Error { id: Option<u64>, message: String },
}

/// A line that could not be decoded. `id` is recovered when the line was at
/// least an object with an integer id, so the peer can still answer it.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeError {
    pub id: Option<u64>,
    pub message: String,
}

impl fmt::Display for DecodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Serialize, Deserialize)]
struct FrameMsg<'a> {
    id: u64,
    #[serde(rename = "type")]
    kind: &'a str,
    video_id: &'a str,
    index: u64,
    image_path: Option<&'a str>,
}

#[derive(Serialize)]
struct PoolMsg<'a> {
    id: u64,
    #[serde(rename = "type")]
    kind: &'a str,
    video_id: &'a str,
    frames: &'a [u64],
    stage: &'a str,
}

#[derive(Serialize)]
struct IdOnly<'a> {
    id: u64,
    #[serde(rename = "type")]
    kind: &'a str,
}

#[derive(Serialize)]
struct HelloMsg<'a> {
    #[serde(rename = "type")]
    kind: &'a str,
    name: &'a str,
    capabilities: &'a [String],
}

#[derive(Serialize)]
struct DetectionsMsg<'a> {
    id: u64,
    #[serde(rename = "type")]
    kind: &'a str,
    boxes: &'a [BoxDoc],
}

#[derive(Serialize)]
struct ScoreValueMsg<'a> {
    id: u64,
    #[serde(rename = "type")]
    kind: &'a str,
    value: f64,
}

#[derive(Serialize)]
struct AckMsg<'a> {
    id: u64,
    #[serde(rename = "type")]
    kind: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    frames: Option<&'a [u64]>,
}

#[derive(Serialize)]
struct ErrorMsg<'a> {
    id: Option<u64>,
    #[serde(rename = "type")]
    kind: &'a str,
    message: &'a str,
}

#[derive(Deserialize)]
struct FrameIn {
    id: u64,
    video_id: String,
    index: u64,
    image_path: Option<String>,
}

#[derive(Deserialize)]
struct PoolIn {
    id: u64,
    video_id: String,
    frames: Vec<u64>,
    #[serde(default)]
    stage: Option<String>,
}

#[derive(Deserialize)]
struct IdIn {
    id: u64,
}

#[derive(Deserialize)]
struct HelloIn {
    name: String,
    capabilities: Vec<String>,
}

#[derive(Deserialize)]
struct DetectionsIn {
    id: u64,
    boxes: Vec<BoxDoc>,
}

#[derive(Deserialize)]
struct ScoreValueIn {
    id: u64,
    value: f64,
}

#[derive(Deserialize)]
struct AckIn {
    id: u64,
    #[serde(default)]
    frames: Option<Vec<u64>>,
}

#[derive(Deserialize)]
struct ErrorIn {
    id: Option<u64>,
    message: String,
}

fn line_of<T: Serialize>(msg: &T) -> String {
    serde_json::to_string(msg).expect("protocol messages serialize")
}

/// Splits a line into its object, message type and (if present) integer id.
fn envelope(line: &str) -> Result<(Value, String, Option<u64>), DecodeError> {
    let value: Value = serde_json::from_str(line.trim_end_matches(['\r', '\n']))
        .map_err(|e| DecodeError { id: None, message: format!("not JSON: {e}") })?;
    let obj = value.as_object().ok_or_else(|| DecodeError { id: None, message: "not a JSON object".into() })?;
    let id = obj.get("id").and_then(Value::as_u64);
    let kind = match obj.get("type") {
        Some(Value::String(s)) => s.clone(),
        _ => return Err(DecodeError { id, message: "missing string field \"type\"".into() }),
    };
    Ok((value, kind, id))
}

fn body<T: for<'de> Deserialize<'de>>(value: Value, kind: &str, id: Option<u64>) -> Result<T, DecodeError> {
    serde_json::from_value(value).map_err(|e| DecodeError { id, message: format!("bad {kind} message: {e}") })
}

impl Request {
    pub fn id(&self) -> u64 {
        match self {
            Request::Detect(r) | Request::Score(r) => r.id,
            Request::SetGlobalPool { id, .. } | Request::Shutdown { id } => *id,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Request::Detect(_) => "detect",
            Request::Score(_) => "score",
            Request::SetGlobalPool { .. } => "set_global_pool",
            Request::Shutdown { .. } => "shutdown",
        }
    }

    pub fn encode(&self) -> String {
        match self {
            Request::Detect(r) | Request::Score(r) => line_of(&FrameMsg {
                id: r.id,
                kind: self.type_name(),
                video_id: &r.video_id,
                index: r.index,
                image_path: r.image_path.as_deref(),
            }),
            Request::SetGlobalPool { id, video_id, frames } => line_of(&PoolMsg {
                id: *id,
                kind: "set_global_pool",
                video_id,
                frames,
                stage: "inference",
            }),
            Request::Shutdown { id } => line_of(&IdOnly { id: *id, kind: "shutdown" }),
        }
    }

    pub fn decode(line: &str) -> Result<Self, DecodeError> {
        let (value, kind, id) = envelope(line)?;
        let frame = |f: FrameIn| FrameRequest { id: f.id, video_id: f.video_id, index: f.index, image_path: f.image_path };
        match kind.as_str() {
            "detect" => Ok(Request::Detect(frame(body(value, &kind, id)?))),
            "score" => Ok(Request::Score(frame(body(value, &kind, id)?))),
            "set_global_pool" => {
                let p: PoolIn = body(value, &kind, id)?;
                if let Some(stage) = p.stage.filter(|s| s != "inference") {
                    return Err(DecodeError { id: Some(p.id), message: format!("unsupported stage {stage:?}") });
                }
                Ok(Request::SetGlobalPool { id: p.id, video_id: p.video_id, frames: p.frames })
            }
            "shutdown" => Ok(Request::Shutdown { id: body::<IdIn>(value, &kind, id)?.id }),
            other => Err(DecodeError { id, message: format!("unknown message type {other:?}") }),
        }
    }
}

impl Reply {
    pub fn id(&self) -> Option<u64> {
        match self {
            Reply::Hello { .. } => None,
            Reply::Detections { id, .. } | Reply::ScoreValue { id, .. } | Reply::Ack { id, .. } => Some(*id),
            Reply::Error { id, .. } => *id,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Reply::Hello { .. } => "hello",
            Reply::Detections { .. } => "detections",
            Reply::ScoreValue { .. } => "score_value",
            Reply::Ack { .. } => "ack",
            Reply::Error { .. } => "error",
        }
    }

    pub fn encode(&self) -> String {
        match self {
            Reply::Hello { name, capabilities } => line_of(&HelloMsg { kind: "hello", name, capabilities }),
            Reply::Detections { id, boxes } => line_of(&DetectionsMsg { id: *id, kind: "detections", boxes }),
            Reply::ScoreValue { id, value } => line_of(&ScoreValueMsg { id: *id, kind: "score_value", value: *value }),
            Reply::Ack { id, frames } => line_of(&AckMsg { id: *id, kind: "ack", frames: frames.as_deref() }),
            Reply::Error { id, message } => line_of(&ErrorMsg { id: *id, kind: "error", message }),
        }
    }

    pub fn decode(line: &str) -> Result<Self, DecodeError> {
        let (value, kind, id) = envelope(line)?;
        match kind.as_str() {
            "hello" => {
                let h: HelloIn = body(value, &kind, id)?;
                Ok(Reply::Hello { name: h.name, capabilities: h.capabilities })
            }
            "detections" => {
                let d: DetectionsIn = body(value, &kind, id)?;
                Ok(Reply::Detections { id: d.id, boxes: d.boxes })
            }
            "score_value" => {
                let s: ScoreValueIn = body(value, &kind, id)?;
                Ok(Reply::ScoreValue { id: s.id, value: s.value })
            }
            "ack" => {
                let a: AckIn = body(value, &kind, id)?;
                Ok(Reply::Ack { id: a.id, frames: a.frames })
            }
            "error" => {
                let e: ErrorIn = body(value, &kind, id)?;
                Ok(Reply::Error { id: e.id, message: e.message })
            }
            other => Err(DecodeError { id, message: format!("unknown message type {other:?}") }),
        }
    }
}

/// Checks wire boxes against the detection invariants, naming the first bad
/// field as `boxes[i].<field>`.
pub fn boxes_to_detections(boxes: &[BoxDoc]) -> Result<Vec<Detection>, ProtocolErrorKind> {
    let mut out = Vec::with_capacity(boxes.len());
    for (i, b) in boxes.iter().enumerate() {
        let invalid = |field: &str, message: String| ProtocolErrorKind::Invalid { field: format!("boxes[{i}].{field}"), message };
        if b.label.is_empty() {
            return Err(invalid("label", "empty label".into()));
        }
        if !(0.0..=1.0).contains(&b.score) {
            return Err(invalid("score", format!("confidence {} outside [0, 1]", b.score)));
        }
        let bbox = BoundingBox::from_array(b.bbox).map_err(|e| invalid("bbox", e.to_string()))?;
        out.push(Detection::new(bbox, b.label.clone(), b.score));
    }
    Ok(out)
}

// ---- transport and session ----

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Incoming {
    Line(String),
    Closed,
    TimedOut,
    Failed(String),
}

/// Something that moves protocol lines to and from a backend.
pub trait Transport: Send {
    fn send_line(&mut self, line: &str) -> std::io::Result<()>;
    fn recv_line(&mut self, timeout: Duration) -> Incoming;
    /// Waits for the backend to exit after `shutdown`, closing its input.
    fn finish(&mut self, timeout: Duration) -> Result<(), String>;
}

/// A handshaken connection. At most one request is outstanding at a time.
pub struct Session<T: Transport> {
    transport: T,
    timeouts: Timeouts,
    next_id: u64,
    transcript: VecDeque<String>,
    name: String,
    capabilities: Vec<String>,
}

impl<T: Transport> fmt::Debug for Session<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session").field("name", &self.name).field("capabilities", &self.capabilities).finish()
    }
}

impl<T: Transport> Session<T> {
    pub fn open(transport: T, timeouts: Timeouts) -> Result<Self, ProtocolError> {
        let mut s = Session {
            transport,
            timeouts,
            next_id: 1,
            transcript: VecDeque::new(),
            name: String::new(),
            capabilities: Vec::new(),
        };
        let line = s.recv(timeouts.handshake)?;
        match Reply::decode(&line) {
            Ok(Reply::Hello { name, capabilities }) => {
                s.name = name;
                s.capabilities = capabilities;
                Ok(s)
            }
            _ => Err(s.fail(ProtocolErrorKind::Handshake(line))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn capabilities(&self) -> &[String] {
        &self.capabilities
    }

    pub fn transcript(&self) -> Vec<String> {
        self.transcript.iter().cloned().collect()
    }

    fn record(&mut self, prefix: &str, line: &str) {
        let mut entry = format!("{prefix} {}", line.trim_end());
        if entry.len() > TRANSCRIPT_LINE_LIMIT {
            let mut cut = TRANSCRIPT_LINE_LIMIT;
            while !entry.is_char_boundary(cut) {
                cut -= 1;
            }
            entry.truncate(cut);
            entry.push_str("...");
        }
        if self.transcript.len() == TRANSCRIPT_LINES {
            self.transcript.pop_front();
        }
        self.transcript.push_back(entry);
    }

    fn fail(&self, kind: ProtocolErrorKind) -> ProtocolError {
        ProtocolError { kind, transcript: self.transcript() }
    }

    fn send(&mut self, line: &str) -> Result<(), ProtocolError> {
        self.record(">", line);
        let mut framed = String::with_capacity(line.len() + 1);
        framed.push_str(line);
        framed.push('\n');
        self.transport.send_line(&framed).map_err(|e| self.fail(ProtocolErrorKind::Io(e.to_string())))
    }

    fn recv(&mut self, timeout: Duration) -> Result<String, ProtocolError> {
        match self.transport.recv_line(timeout) {
            Incoming::Line(line) => {
                self.record("<", &line);
                Ok(line)
            }
            Incoming::Closed => Err(self.fail(ProtocolErrorKind::Closed)),
            Incoming::TimedOut => Err(self.fail(ProtocolErrorKind::Timeout(timeout))),
            Incoming::Failed(e) => Err(self.fail(ProtocolErrorKind::Io(e))),
        }
    }

    fn take_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Sends one request and returns its response, which must echo the id.
    /// Error responses become [`ProtocolErrorKind::Remote`].
    pub fn call(&mut self, build: impl FnOnce(u64) -> Request) -> Result<Reply, ProtocolError> {
        let id = self.take_id();
        let req = build(id);
        self.send(&req.encode())?;
        let line = self.recv(self.timeouts.request)?;
        let reply = Reply::decode(&line).map_err(|e| self.fail(ProtocolErrorKind::Malformed(e.message)))?;
        match reply {
            Reply::Error { id: got, message } if got.is_none() || got == Some(id) => {
                Err(self.fail(ProtocolErrorKind::Remote(message)))
            }
            ref r if r.id() != Some(id) => Err(self.fail(ProtocolErrorKind::IdMismatch { expected: id, got: r.id() })),
            r => Ok(r),
        }
    }

    /// Sends an arbitrary line and returns whatever comes back. Used by the
    /// conformance suite to probe error handling.
    pub fn exchange_raw(&mut self, line: &str) -> Result<String, ProtocolError> {
        self.send(line)?;
        self.recv(self.timeouts.request)
    }

    /// Id the next request will carry.
    pub fn peek_id(&self) -> u64 {
        self.next_id
    }

    /// Reserves an id for a hand-built request.
    pub fn reserve_id(&mut self) -> u64 {
        self.take_id()
    }

    fn unexpected(&self, expected: &'static str, got: &Reply) -> ProtocolError {
        self.fail(ProtocolErrorKind::UnexpectedType { expected, got: got.type_name().to_string() })
    }

    fn frame_request(id: u64, key: &FrameKey, image_path: Option<&str>) -> FrameRequest {
        FrameRequest { id, video_id: key.video_id.clone(), index: key.index, image_path: image_path.map(str::to_string) }
    }

    pub fn detect(&mut self, key: &FrameKey, image_path: Option<&str>) -> Result<Vec<Detection>, ProtocolError> {
        match self.call(|id| Request::Detect(Self::frame_request(id, key, image_path)))? {
            Reply::Detections { boxes, .. } => boxes_to_detections(&boxes).map_err(|k| self.fail(k)),
            other => Err(self.unexpected("detections", &other)),
        }
    }

    pub fn score(&mut self, key: &FrameKey, image_path: Option<&str>) -> Result<f64, ProtocolError> {
        match self.call(|id| Request::Score(Self::frame_request(id, key, image_path)))? {
            Reply::ScoreValue { value, .. } if (0.0..=1.0).contains(&value) => Ok(value),
            Reply::ScoreValue { value, .. } => Err(self.fail(ProtocolErrorKind::Invalid {
                field: "value".into(),
                message: format!("score {value} outside [0, 1]"),
            })),
            other => Err(self.unexpected("score_value", &other)),
        }
    }

    /// Announces a reference pool. An ack that echoes frames must echo them exactly.
    pub fn set_global_pool(&mut self, video_id: &str, frames: &[u64]) -> Result<(), ProtocolError> {
        let reply = self.call(|id| Request::SetGlobalPool { id, video_id: video_id.to_string(), frames: frames.to_vec() })?;
        match reply {
            Reply::Ack { frames: Some(echo), .. } if echo != frames => Err(self.fail(ProtocolErrorKind::Invalid {
                field: "frames".into(),
                message: format!("ack echoed {echo:?}, announced {frames:?}"),
            })),
            Reply::Ack { .. } => Ok(()),
            other => Err(self.unexpected("ack", &other)),
        }
    }

    /// Asks the backend to exit and waits for it.
    pub fn shutdown(mut self) -> Result<(), ProtocolError> {
        let id = self.take_id();
        self.send(&Request::Shutdown { id }.encode())?;
        let timeout = self.timeouts.shutdown;
        self.transport.finish(timeout).map_err(|e| self.fail(ProtocolErrorKind::ShutdownFailed(e)))
    }
}
