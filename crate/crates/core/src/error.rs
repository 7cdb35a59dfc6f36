use alloc::string::String;
use alloc::vec::Vec;

use crate::model::FrameKey;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid bounding box [{x1}, {y1}, {x2}, {y2}]: corners must be finite with x2 > x1 and y2 > y1")]
    InvalidBox { x1: f64, y1: f64, x2: f64, y2: f64 },

    /// Detections reference frames the dataset does not contain.
    #[error("{} detection frame(s) not present in the dataset (first: {})", .0.len(), first_key(.0))]
    JoinMismatch(Vec<FrameKey>),

    #[error("no score for frame {0}")]
    MissingScore(FrameKey),

    #[error("score {value} for frame {key} is outside [0, 1]")]
    ScoreOutOfRange { key: FrameKey, value: f64 },

    #[error("video {0:?} has no frames; reference pool is undefined")]
    EmptyVideo(String),

    #[error("nothing to {0}: input is empty")]
    Empty(&'static str),
}

fn first_key(keys: &[FrameKey]) -> FrameKey {
    keys.first().cloned().unwrap_or_else(|| FrameKey::new("", 0))
}
