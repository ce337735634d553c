use std::io::Write;
use std::path::{Path, PathBuf};

use evs_core::compose::StageRecord;
use serde::{Deserialize, Serialize};

use crate::config::{BenchConfig, SCHEMA_VERSION};
use crate::error::{BenchError, Result};
use crate::frontier::FrontierSummary;
use crate::hash::{sha256_file, sha256_hex};
use crate::pipelines::Pipeline;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Header of every per-item CSV.
pub const RUN_CSV_HEADER: [&str; 10] = [
    "pipeline", "seed", "ms", "sc", "iq", "psnr", "overall", "nfe_t2i", "nfe_t2v", "wall_time",
];

/// Metrics and accounting of one pipeline execution on one item.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub pipeline: String,
    pub item: usize,
    pub seed: u64,
    pub mode: usize,
    pub ms: f64,
    pub sc: f64,
    pub iq: f64,
    pub psnr: f64,
    pub overall: f64,
    pub nfe_t2i: usize,
    pub nfe_t2v: usize,
    pub wall_time: f64,
    pub stage_log: Vec<StageRecord>,
}

impl RunRow {
    pub fn nfe_total(&self) -> usize {
        self.nfe_t2i + self.nfe_t2v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    TT2v,
    TV,
    NV,
    Gamma,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::TT2v => "t_t2v",
            SweepAxis::TV => "t_v",
            SweepAxis::NV => "n_v",
            SweepAxis::Gamma => "gamma",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "t_t2v" => Ok(SweepAxis::TT2v),
            "t_v" => Ok(SweepAxis::TV),
            "n_v" => Ok(SweepAxis::NV),
            "gamma" => Ok(SweepAxis::Gamma),
            _ => Err(BenchError::Usage(format!("unknown sweep axis '{s}' (expected t_T2V, t_V, n_V, gamma)"))),
        }
    }
}

/// What produced a manifest, with everything needed to redo it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Invocation {
    Run {
        pipeline: Pipeline,
        dataset: Option<PathBuf>,
    },
    Sweep {
        axis: SweepAxis,
        grid: Vec<f64>,
        dataset: Option<PathBuf>,
    },
    Frontier,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the manifest directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub invocation: Invocation,
    pub config: BenchConfig,
    /// Sweep grid value of each row, parallel to `rows` (empty for plain runs).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<f64>,
    pub rows: Vec<RunRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frontier: Option<FrontierSummary>,
    /// Hash of this manifest's content with wall times zeroed, no artifacts
    /// and the threading mode ignored.
    #[serde(default)]
    pub content_hash: String,
    pub artifacts: Vec<Artifact>,
}

impl RunManifest {
    pub fn new(invocation: Invocation, config: BenchConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: crate::TOOL_VERSION.to_string(),
            invocation,
            config,
            points: Vec::new(),
            rows: Vec::new(),
            frontier: None,
            content_hash: String::new(),
            artifacts: Vec::new(),
        }
    }

    /// Fixes `content_hash`; call after rows are final and before writing
    /// artifacts that embed it.
    pub fn seal(&mut self) -> &str {
        let mut canon = self.clone();
        canon.content_hash.clear();
        canon.artifacts.clear();
        canon.config.single_thread = false;
        for r in &mut canon.rows {
            r.wall_time = 0.0;
        }
        let text = serde_json::to_string(&canon).expect("manifest serializes");
        self.content_hash = sha256_hex(text.as_bytes());
        &self.content_hash
    }

    pub fn add_artifact(&mut self, dir: &Path, name: &str) -> Result<()> {
        let sha256 = sha256_file(&dir.join(name))?;
        self.artifacts.push(Artifact {
            path: name.to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        crate::write_json(&path, self)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let value: serde_json::Value = crate::read_json(path)?;
        let version = value.get("schema_version").and_then(|v| v.as_u64());
        if version != Some(SCHEMA_VERSION as u64) {
            return Err(BenchError::Config(format!(
                "{}: manifest schema_version {:?} (supported: {SCHEMA_VERSION})",
                path.display(),
                version
            )));
        }
        serde_json::from_value(value).map_err(|e| BenchError::Malformed {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> BenchError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => BenchError::io(path, source),
        other => BenchError::Malformed {
            path: path.to_path_buf(),
            reason: format!("{other:?}"),
        },
    }
}

/// Writes rows with [`RUN_CSV_HEADER`] columns.
pub fn write_run_csv(path: &Path, rows: &[RunRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |e| csv_error(path, e);
    w.write_record(RUN_CSV_HEADER).map_err(err)?;
    for r in rows {
        w.write_record([
            r.pipeline.clone(),
            r.seed.to_string(),
            r.ms.to_string(),
            r.sc.to_string(),
            r.iq.to_string(),
            r.psnr.to_string(),
            r.overall.to_string(),
            r.nfe_t2i.to_string(),
            r.nfe_t2v.to_string(),
            r.wall_time.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

/// Writes `text` to `path`, replacing any existing file.
pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| BenchError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| BenchError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(wall: f64) -> RunRow {
        RunRow {
            pipeline: "evs".into(),
            item: 0,
            seed: 1,
            mode: 0,
            ms: 0.9,
            sc: 0.8,
            iq: -1.0,
            psnr: 12.0,
            overall: 0.7,
            nfe_t2i: 20,
            nfe_t2v: 6,
            wall_time: wall,
            stage_log: vec![],
        }
    }

    #[test]
    fn content_hash_ignores_wall_time_and_artifacts() {
        let inv = Invocation::Run {
            pipeline: Pipeline::Evs,
            dataset: None,
        };
        let mut a = RunManifest::new(inv.clone(), BenchConfig::default());
        a.rows.push(row(0.5));
        let mut b = RunManifest::new(inv, BenchConfig::default());
        b.rows.push(row(7.0));
        b.artifacts.push(Artifact {
            path: "x".into(),
            sha256: "y".into(),
        });
        assert_eq!(a.seal().to_string(), b.seal().to_string());
        b.rows[0].ms = 0.91;
        assert_ne!(a.content_hash, b.seal());
    }

    #[test]
    fn version_mismatch_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::new(Invocation::Frontier, BenchConfig::default());
        m.schema_version = 2;
        let path = m.write(dir.path()).unwrap();
        assert!(matches!(RunManifest::read(&path), Err(BenchError::Config(_))));
        std::fs::write(&path, "{not json").unwrap();
        assert!(matches!(RunManifest::read(&path), Err(BenchError::Malformed { .. })));
    }

    #[test]
    fn axis_names() {
        for a in [SweepAxis::TT2v, SweepAxis::TV, SweepAxis::NV, SweepAxis::Gamma] {
            assert_eq!(SweepAxis::parse(a.name()).unwrap(), a);
        }
        assert_eq!(SweepAxis::parse("t_T2V").unwrap(), SweepAxis::TT2v);
        assert!(SweepAxis::parse("beta").is_err());
    }
}
