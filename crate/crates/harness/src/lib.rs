//! IO side of the difficulty-driven detection pipeline: JSON file formats,
//! detector backends over a line protocol, the two-round scheduler, threshold
//! sweeps, synthetic fixtures and the backend conformance suite.

mod error;
pub mod backend;
pub mod config;
pub mod conformance;
pub mod fixtures;
pub mod formats;
pub mod pipeline;
pub mod protocol;
pub mod scheduler;
pub mod scores;
pub mod stub;
pub mod sweep;
pub mod transport;

pub use error::{Error, Result};
