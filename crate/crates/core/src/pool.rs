//! Global reference frame selection: the `k` lowest-difficulty frames of a video.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::model::{FrameKey, ScoreTable};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolConfig {
    /// Pool size. A video shorter than `k` contributes all of its frames.
    pub k: usize,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self { k: 10 }
    }
}

impl PoolConfig {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig(format!("pool size k must be at least 1, got {k}")));
        }
        Ok(Self { k })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalPool {
    pub video_id: String,
    /// Selected frames in ascending frame index.
    pub frames: Vec<FrameKey>,
    /// Score of each selected frame, aligned with `frames`.
    pub scores: Vec<f64>,
}

impl GlobalPool {
    pub fn frame_indices(&self) -> Vec<u64> {
        self.frames.iter().map(|k| k.index).collect()
    }
}

/// Picks the `k` lowest-scoring frames of one video. Ties go to the lower frame
/// index; the result is sorted by frame index.
pub fn select_pool(video_id: &str, frames: &[FrameKey], scores: &ScoreTable, cfg: &PoolConfig) -> Result<GlobalPool> {
    if cfg.k == 0 {
        return Err(Error::InvalidConfig(String::from("pool size k must be at least 1")));
    }
    if frames.is_empty() {
        return Err(Error::EmptyVideo(String::from(video_id)));
    }
    let mut ranked = frames
        .iter()
        .map(|k| scores.get(k).map(|&s| (k, s)).ok_or_else(|| Error::MissingScore(k.clone())))
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.index.cmp(&b.0.index)));
    ranked.truncate(cfg.k);
    ranked.sort_by_key(|(k, _)| k.index);
    Ok(GlobalPool {
        video_id: String::from(video_id),
        frames: ranked.iter().map(|(k, _)| (*k).clone()).collect(),
        scores: ranked.iter().map(|(_, s)| *s).collect(),
    })
}
