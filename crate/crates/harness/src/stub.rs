//! A protocol backend serving replay files, with switchable misbehaviour.
//! Used as the test double for subprocess backends and by `odd-stub-backend`.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::sync::mpsc::{self, Receiver};
use std::thread;
use std::time::Duration;

use odd_core::{DetectionDump, FrameKey, ScoreTable};

use crate::formats::BoxDoc;
use crate::protocol::{Reply, Request};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// First line is not a hello.
    GarbageHello,
    /// Responses carry the wrong id.
    BadId,
    /// Score responses are 1.2.
    OutOfRangeScore,
    /// The first box of every detection response has confidence 1.5.
    BadConfidence,
    /// Exits with status 3 on the first request.
    Crash,
    /// Never answers requests.
    Hang,
    /// Fails if a second request arrives before the first is answered.
    StrictSequential,
    /// Writes half a response and exits.
    Truncated,
    /// Stays silent on unknown message types.
    IgnoreUnknown,
    /// Ignores shutdown.
    NoExit,
}

impl Fault {
    pub const ALL: [(&'static str, Fault); 11] = [
        ("none", Fault::None),
        ("garbage-hello", Fault::GarbageHello),
        ("bad-id", Fault::BadId),
        ("out-of-range-score", Fault::OutOfRangeScore),
        ("bad-confidence", Fault::BadConfidence),
        ("crash", Fault::Crash),
        ("hang", Fault::Hang),
        ("strict-sequential", Fault::StrictSequential),
        ("truncated", Fault::Truncated),
        ("ignore-unknown", Fault::IgnoreUnknown),
        ("no-exit", Fault::NoExit),
    ];

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().find(|(n, _)| *n == s).map(|(_, f)| *f)
    }
}

#[derive(Debug, Clone, Default)]
pub struct StubConfig {
    pub name: String,
    pub detections: Option<DetectionDump>,
    pub scores: Option<ScoreTable>,
    pub global_pool: bool,
    pub fault: Fault,
}

impl StubConfig {
    pub fn capabilities(&self) -> Vec<String> {
        let mut caps = Vec::new();
        if self.detections.is_some() {
            caps.push("detect".to_string());
        }
        if self.scores.is_some() {
            caps.push("score".to_string());
        }
        if self.global_pool {
            caps.push("global_pool".to_string());
        }
        caps
    }
}

/// What the stub does with one input line.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Reply(String),
    Silent,
    /// Write the bytes without a newline, then exit 0.
    Truncate(String),
    Exit(i32),
    Stall,
}

#[derive(Debug, Default)]
pub struct StubState {
    pub pools: BTreeMap<String, Vec<u64>>,
}

pub fn hello(cfg: &StubConfig) -> String {
    if cfg.fault == Fault::GarbageHello {
        return "HELLO? anyone there".to_string();
    }
    Reply::Hello { name: cfg.name.clone(), capabilities: cfg.capabilities() }.encode()
}

pub fn respond(cfg: &StubConfig, state: &mut StubState, line: &str) -> Action {
    let req = match Request::decode(line) {
        Ok(r) => r,
        Err(e) if cfg.fault == Fault::IgnoreUnknown && e.message.starts_with("unknown message type") => {
            return Action::Silent
        }
        Err(e) => return Action::Reply(Reply::Error { id: e.id, message: e.message }.encode()),
    };
    match (cfg.fault, &req) {
        (_, Request::Shutdown { .. }) if cfg.fault == Fault::NoExit => return Action::Stall,
        (_, Request::Shutdown { .. }) => return Action::Exit(0),
        (Fault::Crash, _) => return Action::Exit(3),
        (Fault::Hang, _) => return Action::Silent,
        _ => {}
    }
    let id = if cfg.fault == Fault::BadId { req.id() + 1 } else { req.id() };
    let error = |message: String| Reply::Error { id: Some(id), message };
    let reply = match req {
        Request::Detect(r) => match &cfg.detections {
            None => error("detect not supported".into()),
            Some(dump) => match dump.get(&FrameKey::new(r.video_id.clone(), r.index)) {
                None => error(format!("no detections for frame {}#{}", r.video_id, r.index)),
                Some(dets) => {
                    let mut boxes: Vec<BoxDoc> = dets.iter().map(BoxDoc::from).collect();
                    if cfg.fault == Fault::BadConfidence {
                        if let Some(b) = boxes.first_mut() {
                            b.score = 1.5;
                        }
                    }
                    Reply::Detections { id, boxes }
                }
            },
        },
        Request::Score(r) => match &cfg.scores {
            None => error("score not supported".into()),
            Some(table) => match table.get(&FrameKey::new(r.video_id.clone(), r.index)) {
                None => error(format!("no score for frame {}#{}", r.video_id, r.index)),
                Some(_) if cfg.fault == Fault::OutOfRangeScore => Reply::ScoreValue { id, value: 1.2 },
                Some(&value) => Reply::ScoreValue { id, value },
            },
        },
        Request::SetGlobalPool { video_id, frames, .. } => {
            if cfg.global_pool {
                state.pools.insert(video_id, frames.clone());
                Reply::Ack { id, frames: Some(frames) }
            } else {
                error("global_pool not supported".into())
            }
        }
        Request::Shutdown { .. } => unreachable!("handled above"),
    };
    let line = reply.encode();
    if cfg.fault == Fault::Truncated {
        let half = line.len() / 2;
        return Action::Truncate(line[..half].to_string());
    }
    Action::Reply(line)
}

fn spawn_reader<R: Read + Send + 'static>(input: R) -> Receiver<String> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(input).lines() {
            let Ok(line) = line else { break };
            if tx.send(line).is_err() {
                break;
            }
        }
    });
    rx
}

/// Runs the stub until shutdown or end of input; returns the exit status.
pub fn serve<R: Read + Send + 'static, W: Write>(cfg: &StubConfig, input: R, mut output: W) -> io::Result<i32> {
    let lines = spawn_reader(input);
    writeln!(output, "{}", hello(cfg))?;
    output.flush()?;
    let mut state = StubState::default();
    while let Ok(line) = lines.recv() {
        if line.trim().is_empty() {
            continue;
        }
        if cfg.fault == Fault::StrictSequential {
            thread::sleep(Duration::from_millis(20));
            if lines.try_recv().is_ok() {
                let msg = Reply::Error { id: None, message: "pipelined request: previous one not yet answered".into() };
                writeln!(output, "{}", msg.encode())?;
                output.flush()?;
                return Ok(1);
            }
        }
        match respond(cfg, &mut state, &line) {
            Action::Reply(reply) => {
                writeln!(output, "{reply}")?;
                output.flush()?;
            }
            Action::Silent => {}
            Action::Truncate(bytes) => {
                write!(output, "{bytes}")?;
                output.flush()?;
                return Ok(0);
            }
            Action::Exit(code) => return Ok(code),
            Action::Stall => loop {
                thread::sleep(Duration::from_secs(3600));
            },
        }
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use odd_core::{BoundingBox, Detection};

    fn cfg(fault: Fault) -> StubConfig {
        let det = Detection::new(BoundingBox::new(0.0, 0.0, 2.0, 2.0).unwrap(), "cat", 0.75);
        StubConfig {
            name: "stub".into(),
            detections: Some([(FrameKey::new("v", 0), vec![det])].into_iter().collect()),
            scores: Some([(FrameKey::new("v", 0), 0.25)].into_iter().collect()),
            global_pool: true,
            fault,
        }
    }

    #[test]
    fn answers_in_protocol_shape() {
        let c = cfg(Fault::None);
        assert_eq!(hello(&c), r#"{"type":"hello","name":"stub","capabilities":["detect","score","global_pool"]}"#);
        let mut st = StubState::default();
        let detect = r#"{"id":1,"type":"detect","video_id":"v","index":0,"image_path":null}"#;
        assert_eq!(
            respond(&c, &mut st, detect),
            Action::Reply(r#"{"id":1,"type":"detections","boxes":[{"label":"cat","bbox":[0.0,0.0,2.0,2.0],"score":0.75}]}"#.into())
        );
        let unknown = respond(&c, &mut st, r#"{"id":2,"type":"warp"}"#);
        assert!(matches!(unknown, Action::Reply(ref l) if l.starts_with(r#"{"id":2,"type":"error""#)));
        assert_eq!(respond(&c, &mut st, r#"{"id":3,"type":"shutdown"}"#), Action::Exit(0));
    }

    #[test]
    fn faults_change_behaviour() {
        let mut st = StubState::default();
        let score = r#"{"id":5,"type":"score","video_id":"v","index":0,"image_path":null}"#;
        assert_eq!(respond(&cfg(Fault::OutOfRangeScore), &mut st, score), Action::Reply(r#"{"id":5,"type":"score_value","value":1.2}"#.into()));
        assert_eq!(respond(&cfg(Fault::BadId), &mut st, score), Action::Reply(r#"{"id":6,"type":"score_value","value":0.25}"#.into()));
        assert_eq!(respond(&cfg(Fault::Hang), &mut st, score), Action::Silent);
        assert_eq!(respond(&cfg(Fault::IgnoreUnknown), &mut st, r#"{"id":1,"type":"warp"}"#), Action::Silent);
        assert!(Fault::parse("strict-sequential").is_some() && Fault::parse("nope").is_none());
    }
}
