use std::path::{Path, PathBuf};

use evs_core::io;
use evs_core::models::{
    build_worlds, make_degraded_video, train_toy_denoiser, AnalyticDenoiser, Condition, Denoiser, TemporalWorld,
    TrainReport,
};
use evs_core::{AttentionNet, Latent, Models, Schedule, Spatial, Temporal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{derive_seed, BenchConfig, T2vModel};
use crate::error::{at_path, BenchError, Result};
use crate::hash::sha256_file;

/// Worlds, schedules and denoisers shared by every command.
pub struct Lab {
    pub cfg: BenchConfig,
    pub sw: Spatial,
    pub tw: Temporal,
    pub sched_i: Schedule,
    pub sched_v: Schedule,
    pub t2i: AnalyticDenoiser<f64, Spatial>,
    pub t2v: T2v,
}

pub enum T2v {
    Analytic(AnalyticDenoiser<f64, Temporal>),
    Net(AttentionNet),
}

impl T2v {
    pub fn as_dyn(&self) -> &dyn Denoiser<f64> {
        match self {
            T2v::Analytic(d) => d,
            T2v::Net(n) => n,
        }
    }
}

impl Lab {
    /// Builds the analytic lab. An attention T2V model is attached when the
    /// config asks for one.
    pub fn new(cfg: &BenchConfig) -> Result<Self> {
        cfg.validate()?;
        let (sw, tw) = build_worlds::<f64>(&cfg.world, cfg.seed)?;
        let sched_i = cfg.schedule_i.build()?;
        let sched_v = cfg.schedule_v.build()?;
        let t2i = AnalyticDenoiser::new("t2i-analytic", sw.clone(), sched_i.clone());
        let t2v = match cfg.t2v_model {
            T2vModel::Analytic => T2v::Analytic(AnalyticDenoiser::new("t2v-analytic", tw.clone(), sched_v.clone())),
            T2vModel::Attention => T2v::Net(obtain_net(cfg, &tw, &sched_v)?.0),
        };
        Ok(Self {
            cfg: cfg.clone(),
            sw,
            tw,
            sched_i,
            sched_v,
            t2i,
            t2v,
        })
    }

    pub fn models(&self) -> Models<'_, f64> {
        Models::new(&self.t2i, &self.sched_i, self.t2v.as_dyn(), &self.sched_v)
    }

    /// The attention network, either the configured T2V model or a fresh one.
    pub fn net(&self) -> Result<std::borrow::Cow<'_, AttentionNet>> {
        match &self.t2v {
            T2v::Net(n) => Ok(std::borrow::Cow::Borrowed(n)),
            T2v::Analytic(_) => Ok(std::borrow::Cow::Owned(obtain_net(&self.cfg, &self.tw, &self.sched_v)?.0)),
        }
    }

    pub fn blocks(&self) -> Option<usize> {
        match &self.t2v {
            T2v::Net(n) => Some(n.shape().blocks),
            T2v::Analytic(_) => None,
        }
    }
}

/// Loads `cfg.net_path` if set, otherwise trains with `cfg.train`.
pub fn obtain_net(
    cfg: &BenchConfig,
    tw: &TemporalWorld<f64>,
    sched_v: &Schedule,
) -> Result<(AttentionNet, Option<TrainReport>)> {
    match &cfg.net_path {
        Some(path) => {
            let net: AttentionNet = io::load(path, |r| io::read_net(r)).map_err(at_path(path))?;
            let s = net.shape();
            if s.frames != tw.frames() || s.dim != cfg.world.dim || s.total_steps != sched_v.total_steps() {
                return Err(BenchError::Config(format!(
                    "{}: network shape {s:?} does not match the configured world and T2V schedule",
                    path.display()
                )));
            }
            Ok((net, None))
        }
        None => {
            let (net, report) = train_toy_denoiser(tw, sched_v, &cfg.train)?;
            Ok((net, Some(report)))
        }
    }
}

/// One degraded input video.
#[derive(Clone, Debug)]
pub struct Item {
    pub index: usize,
    pub seed: u64,
    pub mode: usize,
    pub latent: Latent,
}

impl Item {
    pub fn condition(&self) -> Condition<f64> {
        Condition::mode(self.mode)
    }
}

pub fn generate_items(cfg: &BenchConfig, tw: &Temporal) -> Result<Vec<Item>> {
    (0..cfg.dataset.items)
        .map(|i| {
            let seed = derive_seed(cfg.seed, i as u64);
            let mode = i % cfg.world.modes;
            let latent = make_degraded_video(tw, &Condition::mode(mode), cfg.dataset.flicker_sigma, seed)?;
            Ok(Item {
                index: i,
                seed,
                mode,
                latent,
            })
        })
        .collect()
}

pub const DATASET_INDEX: &str = "dataset.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub index: usize,
    pub seed: u64,
    pub mode: usize,
    pub file: String,
    pub sha256: String,
}

/// `dataset.json`: provenance of a generated dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub schema_version: u32,
    pub tool_version: String,
    pub config: BenchConfig,
    pub items: Vec<DatasetEntry>,
}

pub fn item_file_name(index: usize) -> String {
    format!("item_{index:03}.evslat")
}

/// Writes one latent file per item plus the index.
pub fn write_dataset(cfg: &BenchConfig, items: &[Item], dir: &Path) -> Result<DatasetIndex> {
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let mut entries = Vec::with_capacity(items.len());
    for item in items {
        let name = item_file_name(item.index);
        let path = dir.join(&name);
        io::save(&path, |w| io::write_latents(w, std::slice::from_ref(&item.latent))).map_err(at_path(&path))?;
        entries.push(DatasetEntry {
            index: item.index,
            seed: item.seed,
            mode: item.mode,
            file: name,
            sha256: sha256_file(&path)?,
        });
    }
    let index = DatasetIndex {
        schema_version: crate::config::SCHEMA_VERSION,
        tool_version: crate::TOOL_VERSION.to_string(),
        config: cfg.clone(),
        items: entries,
    };
    crate::write_json(&dir.join(DATASET_INDEX), &index)?;
    Ok(index)
}

/// Reads a dataset directory written by [`write_dataset`]. The dataset's
/// worlds must match `cfg`.
pub fn read_dataset(dir: &Path, cfg: &BenchConfig) -> Result<Vec<Item>> {
    let index_path = dir.join(DATASET_INDEX);
    let index: DatasetIndex = crate::read_json(&index_path)?;
    if index.schema_version != crate::config::SCHEMA_VERSION {
        return Err(BenchError::Config(format!(
            "{}: schema_version {}",
            index_path.display(),
            index.schema_version
        )));
    }
    if index.config.seed != cfg.seed || index.config.world != cfg.world {
        return Err(BenchError::Config(format!(
            "{}: dataset was generated for a different world (seed {})",
            dir.display(),
            index.config.seed
        )));
    }
    let mut items = Vec::with_capacity(index.items.len());
    for e in &index.items {
        let path: PathBuf = dir.join(&e.file);
        let mut v: Vec<Latent> = io::load(&path, |r| io::read_latents(r)).map_err(at_path(&path))?;
        if v.len() != 1 {
            return Err(BenchError::Malformed {
                path,
                reason: format!("expected one latent, found {}", v.len()),
            });
        }
        let latent = v.pop().unwrap();
        if latent.shape() != (cfg.world.frames, cfg.world.dim) || e.mode >= cfg.world.modes {
            return Err(BenchError::Malformed {
                path,
                reason: format!("shape {:?} / mode {} do not fit the world", latent.shape(), e.mode),
            });
        }
        items.push(Item {
            index: e.index,
            seed: e.seed,
            mode: e.mode,
            latent,
        });
    }
    Ok(items)
}

/// Maps `f` over `xs`, in parallel unless `single_thread`. Output order
/// always follows input order.
pub fn map_items<X: Sync, Y: Send>(
    xs: &[X],
    single_thread: bool,
    f: impl Fn(&X) -> Result<Y> + Sync + Send,
) -> Result<Vec<Y>> {
    if single_thread {
        xs.iter().map(f).collect()
    } else {
        xs.par_iter().map(f).collect()
    }
}
