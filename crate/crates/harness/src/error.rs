use std::path::PathBuf;

use odd_core::{FrameKey, Violation};

use crate::protocol::ProtocolError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{origin}: malformed document: {source}")]
    Parse {
        origin: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{origin}: {} violation(s){}", violations.len(), list_violations(violations))]
    Invalid { origin: String, violations: Vec<Violation> },

    #[error(transparent)]
    Core(#[from] odd_core::Error),

    #[error(transparent)]
    Protocol(#[from] ProtocolError),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("backend {backend:?} has no detections for frame {key}")]
    MissingFrame { backend: String, key: FrameKey },

    #[error("round {round}, {at}: {source}")]
    Pipeline {
        round: u8,
        at: String,
        #[source]
        source: Box<Error>,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn list_violations(v: &[Violation]) -> String {
    let mut s = String::new();
    for item in v.iter().take(20) {
        s.push_str("\n  ");
        s.push_str(&item.to_string());
    }
    if v.len() > 20 {
        s.push_str(&format!("\n  ... and {} more", v.len() - 20));
    }
    s
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit status: 1 validation, 2 protocol, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            Error::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => 3,
            Error::Protocol(_) => 2,
            Error::Pipeline { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}
