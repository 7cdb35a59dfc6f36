use odd_core::FrameKey;
use odd_harness::formats::BoxDoc;
use odd_harness::protocol::{FrameRequest, ProtocolError, ProtocolErrorKind, Reply, Request, Session, Timeouts};
use odd_harness::transport::ScriptedTransport;
use proptest::prelude::*;
use serde_json::Value;

const HELLO: &str = r#"{"type":"hello","name":"fuzz","capabilities":["detect","score","global_pool"]}"#;
const BOX: &str = r#"{"label":"cat","bbox":[1.0,2.0,3.0,4.0],"score":0.5}"#;

#[derive(Debug, Clone)]
enum Answer {
    Correct,
    WrongId(u64),
    Stale,
    Truncated(usize),
    WrongType,
    RemoteError,
    Garbage(String),
    Nothing,
    Extra,
}

fn answer() -> impl Strategy<Value = Answer> {
    prop_oneof![
        3 => Just(Answer::Correct),
        1 => (2u64..50).prop_map(Answer::WrongId),
        1 => Just(Answer::Stale),
        1 => (0usize..40).prop_map(Answer::Truncated),
        1 => Just(Answer::WrongType),
        1 => Just(Answer::RemoteError),
        1 => "[ -~]{0,60}".prop_map(Answer::Garbage),
        1 => Just(Answer::Nothing),
        1 => Just(Answer::Extra),
    ]
}

fn correct_reply(req: &Value) -> String {
    let id = req["id"].as_u64().unwrap();
    match req["type"].as_str().unwrap() {
        "detect" => format!(r#"{{"id":{id},"type":"detections","boxes":[{BOX}]}}"#),
        "score" => format!(r#"{{"id":{id},"type":"score_value","value":0.25}}"#),
        "set_global_pool" => format!(r#"{{"id":{id},"type":"ack"}}"#),
        other => panic!("host sent {other}"),
    }
}

fn responder(answers: Vec<Answer>) -> impl FnMut(&str) -> Vec<String> + Send {
    let mut n = 0;
    move |line| {
        let req: Value = serde_json::from_str(line).expect("host sends JSON");
        let id = req["id"].as_u64().unwrap();
        let good = correct_reply(&req);
        let a = answers[n % answers.len()].clone();
        n += 1;
        match a {
            Answer::Correct => vec![good],
            Answer::WrongId(k) => vec![good.replacen(&format!(r#""id":{id}"#), &format!(r#""id":{}"#, id + k), 1)],
            Answer::Stale => vec![good.replacen(&format!(r#""id":{id}"#), &format!(r#""id":{}"#, id - 1), 1)],
            Answer::Truncated(k) => vec![good[..k.min(good.len() - 1)].to_string()],
            Answer::WrongType if req["type"] == "set_global_pool" => {
                vec![format!(r#"{{"id":{id},"type":"score_value","value":0.5}}"#)]
            }
            Answer::WrongType => vec![format!(r#"{{"id":{id},"type":"ack"}}"#)],
            Answer::RemoteError => vec![format!(r#"{{"id":{id},"type":"error","message":"nope"}}"#)],
            Answer::Garbage(s) => vec![s],
            Answer::Nothing => vec![],
            Answer::Extra => vec![good.clone(), good],
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Detect,
    Score,
    Pool,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![Just(Op::Detect), Just(Op::Score), Just(Op::Pool)]
}

fn check_error(e: &ProtocolError) {
    assert!(!e.transcript.is_empty() && e.transcript.len() <= 5, "{:?}", e.transcript);
    let _ = e.to_string();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn hostile_backends_yield_typed_errors(answers in prop::collection::vec(answer(), 1..8), ops in prop::collection::vec(op(), 1..20)) {
        let transport = ScriptedTransport::new(vec![HELLO.to_string()], responder(answers.clone()));
        let mut s = Session::open(transport, Timeouts::default()).unwrap();
        let key = FrameKey::new("v", 0);
        for (i, op) in ops.iter().enumerate() {
            let result = match op {
                Op::Detect => s.detect(&key, None).map(|d| d.len() as f64),
                Op::Score => s.score(&key, None),
                Op::Pool => s.set_global_pool("v", &[0, 1]).map(|()| 0.0),
            };
            // Extra lines shift every later answer, so exact outcomes are only
            // predictable before the first one.
            let predictable = !answers.iter().take(i).any(|a| matches!(a, Answer::Extra));
            let a = &answers[i % answers.len()];
            match result {
                Ok(v) => {
                    if predictable {
                        prop_assert!(matches!(a, Answer::Correct | Answer::Extra | Answer::Garbage(_)), "{a:?} accepted");
                    }
                    if matches!(op, Op::Score) { prop_assert!((0.0..=1.0).contains(&v)); }
                }
                Err(e) => {
                    check_error(&e);
                    if predictable {
                        match (a, &e.kind) {
                            (Answer::Correct | Answer::Extra, k) => prop_assert!(false, "correct answer rejected: {k}"),
                            (Answer::WrongId(_) | Answer::Stale, k) => prop_assert!(matches!(k, ProtocolErrorKind::IdMismatch { .. }), "{k}"),
                            (Answer::Truncated(_), k) => prop_assert!(matches!(k, ProtocolErrorKind::Malformed(_)), "{k}"),
                            (Answer::WrongType, k) => prop_assert!(matches!(k, ProtocolErrorKind::UnexpectedType { .. }), "{k}"),
                            (Answer::RemoteError, k) => prop_assert!(matches!(k, ProtocolErrorKind::Remote(_)), "{k}"),
                            (Answer::Nothing, k) => prop_assert_eq!(k, &ProtocolErrorKind::Closed),
                            (Answer::Garbage(_), _) => {}
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn decoders_never_panic(line in "\\PC{0,120}") {
        let _ = Reply::decode(&line);
        let _ = Request::decode(&line);
    }

    #[test]
    fn json_shaped_noise_is_rejected_or_decoded(
        id in prop::option::of(0u64..1000),
        ty in prop::sample::select(vec!["hello", "detect", "detections", "score", "score_value", "ack", "error", "set_global_pool", "shutdown", "?"]),
        extra in prop::collection::btree_map("[a-z_]{1,12}", prop_oneof![Just(Value::Null), any::<i64>().prop_map(Value::from), "[a-z]{0,5}".prop_map(Value::from)], 0..4),
    ) {
        let mut obj = serde_json::Map::new();
        if let Some(id) = id { obj.insert("id".into(), id.into()); }
        obj.insert("type".into(), ty.into());
        obj.extend(extra.into_iter().map(|(k, v)| (k, v)));
        let line = Value::Object(obj).to_string();
        if let Err(e) = Reply::decode(&line) {
            prop_assert!(!e.message.is_empty());
        }
        if let Err(e) = Request::decode(&line) {
            prop_assert!(!e.message.is_empty());
        }
    }

    #[test]
    fn requests_round_trip(id in any::<u64>(), video in "\\PC{0,16}", index in any::<u64>(), path in prop::option::of("\\PC{0,16}"), frames in prop::collection::vec(any::<u64>(), 0..6), which in 0..4u8) {
        let fr = FrameRequest { id, video_id: video.clone(), index, image_path: path };
        let req = match which {
            0 => Request::Detect(fr),
            1 => Request::Score(fr),
            2 => Request::SetGlobalPool { id, video_id: video, frames },
            _ => Request::Shutdown { id },
        };
        let line = req.encode();
        prop_assert!(!line.contains('\n'));
        prop_assert_eq!(Request::decode(&line).unwrap(), req);
    }

    #[test]
    fn replies_round_trip(id in any::<u64>(), label in "\\PC{0,10}", bbox in prop::array::uniform4(-1e6f64..1e6), score in 0.0f64..=1.0, frames in prop::option::of(prop::collection::vec(any::<u64>(), 0..4)), which in 0..4u8) {
        let reply = match which {
            0 => Reply::Detections { id, boxes: vec![BoxDoc { label: label.clone(), bbox, score }] },
            1 => Reply::ScoreValue { id, value: score },
            2 => Reply::Ack { id, frames },
            _ => Reply::Error { id: Some(id), message: label },
        };
        prop_assert_eq!(Reply::decode(&reply.encode()).unwrap(), reply);
    }
}

#[test]
fn transcript_keeps_only_recent_lines() {
    let transport = ScriptedTransport::new(vec![HELLO.to_string()], |line| {
        let req: Value = serde_json::from_str(line).unwrap();
        vec![correct_reply(&req)]
    });
    let mut s = Session::open(transport, Timeouts::default()).unwrap();
    for _ in 0..10 {
        s.score(&FrameKey::new("v", 0), None).unwrap();
    }
    let t = s.transcript();
    assert_eq!(t.len(), 5);
    assert!(t.last().unwrap().starts_with(r#"< {"id":10,"#), "{t:?}");
}

#[test]
fn silence_and_garbage_hello_fail_the_handshake() {
    let err = Session::open(ScriptedTransport::new(vec![], |_| vec![]), Timeouts::default()).unwrap_err();
    assert_eq!(err.kind, ProtocolErrorKind::Closed);
    let err = Session::open(ScriptedTransport::new(vec![r#"{"id":1,"type":"ack"}"#.into()], |_| vec![]), Timeouts::default()).unwrap_err();
    assert!(matches!(err.kind, ProtocolErrorKind::Handshake(_)));
    assert_eq!(err.transcript.len(), 1);
}

#[test]
fn pool_ack_must_echo_exactly() {
    let transport = ScriptedTransport::new(vec![HELLO.to_string()], |line| {
        let req: Value = serde_json::from_str(line).unwrap();
        vec![format!(r#"{{"id":{},"type":"ack","frames":[2,1]}}"#, req["id"])]
    });
    let mut s = Session::open(transport, Timeouts::default()).unwrap();
    assert!(s.set_global_pool("v", &[2, 1]).is_ok());
    let err = s.set_global_pool("v", &[1, 2]).unwrap_err();
    assert!(matches!(err.kind, ProtocolErrorKind::Invalid { ref field, .. } if field == "frames"));
}
