//! Benchmark harness for the EVS lab: dataset generation, pipeline runs,
//! sweeps, the SDEdit-vs-SFI frontier and report aggregation.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

pub mod commands;
pub mod config;
pub mod error;
pub mod frontier;
pub mod hash;
pub mod lab;
pub mod manifest;
pub mod pipelines;
pub mod svg;

pub use config::BenchConfig;
pub use error::{BenchError, Result};
pub use manifest::RunManifest;

pub const TOOL_VERSION: &str = concat!("evs-bench ", env!("CARGO_PKG_VERSION"));

pub(crate) fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| BenchError::Numeric(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| BenchError::io(path, e))
}

pub(crate) fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| BenchError::Malformed {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}
