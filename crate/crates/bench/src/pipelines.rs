use std::fmt;
use std::str::FromStr;

use evs_core::compose::{compose_iv, compose_vi, run_evs, run_iterated_baseline, run_t2i_only, run_t2v_only};
use evs_core::metrics::{score_video, sharp_reference};
use evs_core::{Latent, MetricReport, PipelineConfig, PipelineResult};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::lab::{Item, Lab};
use crate::manifest::RunRow;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    T2i,
    T2v,
    Iv,
    Vi,
    Evs,
    Iterated,
}

impl Pipeline {
    pub const ALL: [Pipeline; 6] = [
        Pipeline::T2i,
        Pipeline::T2v,
        Pipeline::Iv,
        Pipeline::Vi,
        Pipeline::Evs,
        Pipeline::Iterated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::T2i => "t2i",
            Pipeline::T2v => "t2v",
            Pipeline::Iv => "iv",
            Pipeline::Vi => "vi",
            Pipeline::Evs => "evs",
            Pipeline::Iterated => "iterated",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pipeline {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        Pipeline::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| BenchError::Usage(format!("unknown pipeline '{s}' (expected t2i, t2v, iv, vi, evs, iterated)")))
    }
}

/// Runs `pipeline` on one item. The item seed drives all pipeline noise.
pub fn execute(lab: &Lab, pipeline: Pipeline, pcfg: &PipelineConfig, item: &Item) -> Result<PipelineResult<f64>> {
    let m = lab.models();
    let c = item.condition();
    let z = &item.latent;
    let seed = item.seed;
    let r = match pipeline {
        Pipeline::T2i => run_t2i_only(z, pcfg.t_i, &m, &c, seed)?,
        Pipeline::T2v => run_t2v_only(z, pcfg.t_v, &m, &c, seed)?,
        Pipeline::Iv => compose_iv(z, pcfg.t_i, pcfg.t_v, &m, &c, seed)?,
        Pipeline::Vi => compose_vi(z, pcfg.t_v, pcfg.t_i, &m, &c, seed)?,
        Pipeline::Evs => {
            let cfg = PipelineConfig {
                seed,
                ..pcfg.clone()
            };
            run_evs(z, &cfg, &m, &c)?
        }
        Pipeline::Iterated => run_iterated_baseline(z, lab.cfg.iterated_rounds, pcfg.t_i, pcfg.t_v, &m, &c, seed)?,
    };
    Ok(r)
}

/// Scores a pipeline output against the sharp reference of its mode.
pub fn score(lab: &Lab, item: &Item, result: &PipelineResult<f64>) -> Result<MetricReport> {
    let c = item.condition();
    let reference = sharp_reference(&lab.sw, &c, result.output.frames())?;
    let mut report = score_video(&result.output, &reference, &lab.sw, &c, &lab.cfg.metrics)?;
    report.nfe_total = result.nfe_total();
    report.wall_time = result.wall_time;
    Ok(report)
}

/// Executes and scores one item, returning the CSV/manifest row and output.
pub fn run_item(lab: &Lab, pipeline: Pipeline, pcfg: &PipelineConfig, item: &Item) -> Result<(RunRow, Latent)> {
    let result = execute(lab, pipeline, pcfg, item)?;
    let metrics = score(lab, item, &result)?;
    let row = RunRow {
        pipeline: pipeline.name().to_string(),
        item: item.index,
        seed: item.seed,
        mode: item.mode,
        ms: metrics.ms,
        sc: metrics.sc,
        iq: metrics.iq,
        psnr: metrics.psnr,
        overall: metrics.overall,
        nfe_t2i: result.nfe_t2i,
        nfe_t2v: result.nfe_t2v,
        wall_time: result.wall_time,
        stage_log: result.stage_log,
    };
    Ok((row, result.output))
}
