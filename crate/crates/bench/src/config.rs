use std::path::{Path, PathBuf};

use evs_core::models::{TrainRecipe, WorldConfig};
use evs_core::{build_linear_beta, MetricConfig, PipelineConfig, Schedule};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Linear-beta schedule parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub total_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<Schedule> {
        Ok(build_linear_beta(self.total_steps, self.beta_start, self.beta_end)?)
    }

    /// The `T = 50`, `1e-4..0.02` schedule compressed to `total_steps`.
    pub fn rescaled(total_steps: usize) -> Self {
        let k = 50.0 / total_steps as f64;
        Self {
            total_steps,
            beta_start: 1e-4 * k,
            beta_end: 0.02 * k,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub items: usize,
    pub flicker_sigma: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            items: 93,
            flicker_sigma: 0.2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum T2vModel {
    /// Posterior-mean denoiser of the temporal world.
    Analytic,
    /// Trained attention network (loaded from `net_path` or trained on the fly).
    Attention,
}

/// Named injection layer sets of a stack with `L` blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerSet {
    Shallow,
    Deep,
    All,
}

impl LayerSet {
    pub fn layers(self, blocks: usize) -> Vec<usize> {
        match self {
            LayerSet::Shallow => (0..blocks / 2).collect(),
            LayerSet::Deep => (blocks / 2..blocks).collect(),
            LayerSet::All => (0..blocks).collect(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LayerSet::Shallow => "shallow",
            LayerSet::Deep => "deep",
            LayerSet::All => "all",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrontierConfig {
    pub items: usize,
    /// Standard deviation of the i.i.d. coordinates of the style offset.
    pub style_amplitude: f64,
    pub style_seed: u64,
    pub sdedit_timesteps: Vec<usize>,
    pub sfi_timesteps: Vec<usize>,
    pub layer_sets: Vec<LayerSet>,
    /// Layer sets that also inject the feature-map output `f`; the others
    /// inject Q, K and V only.
    pub f_layer_sets: Vec<LayerSet>,
    pub gammas: Vec<f64>,
    pub grid_points: usize,
}

impl Default for FrontierConfig {
    fn default() -> Self {
        Self {
            items: 8,
            style_amplitude: 1.0,
            style_seed: 77,
            sdedit_timesteps: (0..=8).collect(),
            sfi_timesteps: vec![2, 4, 6, 8],
            layer_sets: vec![LayerSet::Shallow, LayerSet::Deep, LayerSet::All],
            f_layer_sets: vec![LayerSet::All],
            gammas: vec![0.5, 0.8, 1.0],
            grid_points: 101,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub world: WorldConfig,
    pub schedule_i: ScheduleSpec,
    pub schedule_v: ScheduleSpec,
    pub dataset: DatasetConfig,
    pub pipeline: PipelineConfig,
    pub iterated_rounds: usize,
    pub metrics: MetricConfig,
    pub t2v_model: T2vModel,
    pub net_path: Option<PathBuf>,
    pub train: TrainRecipe,
    pub frontier: FrontierConfig,
    /// Process dataset items sequentially.
    pub single_thread: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            world: WorldConfig::default(),
            schedule_i: ScheduleSpec::rescaled(50),
            schedule_v: ScheduleSpec::rescaled(8),
            dataset: DatasetConfig::default(),
            pipeline: PipelineConfig::default(),
            iterated_rounds: 2,
            metrics: MetricConfig::default(),
            t2v_model: T2vModel::Analytic,
            net_path: None,
            train: TrainRecipe::default(),
            frontier: FrontierConfig::default(),
            single_thread: false,
        }
    }
}

impl BenchConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(BenchError::Config(format!(
                "schema_version {} (supported: {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.dataset.items == 0 {
            return Err(BenchError::Config("dataset.items must be >= 1".into()));
        }
        if !(self.dataset.flicker_sigma >= 0.0) {
            return Err(BenchError::Config("dataset.flicker_sigma must be >= 0".into()));
        }
        if self.iterated_rounds == 0 {
            return Err(BenchError::Config("iterated_rounds must be >= 1".into()));
        }
        self.metrics.validate()?;
        self.pipeline
            .validate(self.schedule_i.total_steps, self.schedule_v.total_steps)?;
        Ok(())
    }

    /// Applies `key.path=value` overrides. Values parse as JSON, falling
    /// back to a plain string.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut root = serde_json::to_value(self).expect("config serializes");
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| BenchError::Usage(format!("override '{o}' is not key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
            let mut node = &mut root;
            let parts: Vec<&str> = key.split('.').collect();
            for (i, part) in parts.iter().enumerate() {
                let obj = node
                    .as_object_mut()
                    .ok_or_else(|| BenchError::Config(format!("override '{key}': '{part}' is not inside an object")))?;
                if i + 1 == parts.len() {
                    obj.insert(part.to_string(), value.clone());
                    break;
                }
                node = obj
                    .entry(part.to_string())
                    .or_insert_with(|| serde_json::Value::Object(Default::default()));
            }
        }
        let cfg: Self = serde_json::from_value(root).map_err(|e| BenchError::Config(format!("override: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Mixes a base seed and an index into an independent-looking seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
