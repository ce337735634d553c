use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use evs_core::io;
use evs_core::models::TrainReport;
use evs_core::sfi::InjectionConfig;
use evs_core::{Latent, PipelineConfig};
use serde::{Deserialize, Serialize};

use crate::config::BenchConfig;
use crate::error::{at_path, BenchError, Result};
use crate::frontier::{envelope, run_frontier, FrontierSummary, Method};
use crate::lab::{generate_items, map_items, obtain_net, read_dataset, write_dataset, DatasetIndex, Item, Lab};
use crate::manifest::{csv_error, csv_writer, write_run_csv, write_text, Invocation, RunManifest, RunRow, SweepAxis};
use crate::pipelines::{run_item, Pipeline};
use crate::svg::{Plot, Series, Style};

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::fs::canonicalize(p).map_err(|e| BenchError::io(p, e))
}

fn load_items(lab: &Lab, dataset: Option<&Path>) -> Result<Vec<Item>> {
    match dataset {
        Some(dir) => read_dataset(dir, &lab.cfg),
        None => generate_items(&lab.cfg, &lab.tw),
    }
}

fn write_outputs(dir: &Path, name: &str, outputs: &[Latent]) -> Result<()> {
    let path = dir.join(name);
    io::save(&path, |w| io::write_latents(w, outputs)).map_err(at_path(&path))
}

/// `gen`: writes the degraded dataset.
pub fn cmd_gen(cfg: &BenchConfig, out: &Path) -> Result<DatasetIndex> {
    cfg.validate()?;
    let (_, tw) = evs_core::models::build_worlds::<f64>(&cfg.world, cfg.seed)?;
    let items = generate_items(cfg, &tw)?;
    write_dataset(cfg, &items, out)
}

/// `run`: one pipeline over every dataset item.
pub fn cmd_run(cfg: &BenchConfig, pipeline: Pipeline, dataset: Option<&Path>, out: &Path) -> Result<RunManifest> {
    let lab = Lab::new(cfg)?;
    run_with_lab(&lab, pipeline, dataset, out)
}

fn run_with_lab(lab: &Lab, pipeline: Pipeline, dataset: Option<&Path>, out: &Path) -> Result<RunManifest> {
    ensure_dir(out)?;
    let items = load_items(lab, dataset)?;
    let results = map_items(&items, lab.cfg.single_thread, |item| {
        run_item(lab, pipeline, &lab.cfg.pipeline, item)
    })?;
    let (rows, outputs): (Vec<RunRow>, Vec<Latent>) = results.into_iter().unzip();

    let dataset = dataset.map(absolute).transpose()?;
    let mut m = RunManifest::new(Invocation::Run { pipeline, dataset }, lab.cfg.clone());
    m.rows = rows;
    m.seal();
    write_outputs(out, "outputs.evslat", &outputs)?;
    write_run_csv(&out.join("run.csv"), &m.rows)?;
    m.add_artifact(out, "outputs.evslat")?;
    m.add_artifact(out, "run.csv")?;
    m.write(out)?;
    Ok(m)
}

fn sweep_point(lab: &Lab, axis: SweepAxis, v: f64) -> Result<PipelineConfig> {
    let mut p = lab.cfg.pipeline.clone();
    let bad = |why: String| BenchError::Config(format!("grid point {}={v}: {why}", axis.name()));
    let as_step = || {
        if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
            Ok(v as usize)
        } else {
            Err(bad("expected a non-negative integer".into()))
        }
    };
    match axis {
        SweepAxis::TT2v => p.t_t2v = as_step()?,
        SweepAxis::TV => p.t_v = as_step()?,
        SweepAxis::NV => p.n_v = as_step()?,
        SweepAxis::Gamma => {
            let blocks = lab
                .blocks()
                .ok_or_else(|| bad("a gamma sweep needs t2v_model = attention".into()))?;
            let mut inj = match p.injection.take() {
                Some(inj) => inj,
                None => InjectionConfig::deep(blocks, 0.0).map_err(|e| bad(e.to_string()))?,
            };
            inj.gamma = v;
            p.injection = Some(inj);
            p.block_mode = evs_core::BlockMode::InversionSfi;
        }
    }
    p.validate(lab.sched_i.total_steps(), lab.sched_v.total_steps())
        .map_err(|e| bad(e.to_string()))?;
    if let (Some(inj), Some(blocks)) = (&p.injection, lab.blocks()) {
        inj.validate(blocks).map_err(|e| bad(e.to_string()))?;
    }
    Ok(p)
}

/// Mean and standard error of one metric at one grid point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanErr {
    pub mean: f64,
    pub stderr: f64,
}

impl MeanErr {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let stderr = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub ms: MeanErr,
    pub sc: MeanErr,
    pub iq: MeanErr,
    pub psnr: MeanErr,
    pub overall: MeanErr,
    pub nfe_total: f64,
}

pub const METRICS: [&str; 5] = ["ms", "sc", "iq", "psnr", "overall"];

fn metric(r: &RunRow, name: &str) -> f64 {
    match name {
        "ms" => r.ms,
        "sc" => r.sc,
        "iq" => r.iq,
        "psnr" => r.psnr,
        "overall" => r.overall,
        _ => unreachable!("unknown metric {name}"),
    }
}

/// Aggregates the rows of a sweep manifest per grid point.
pub fn sweep_points(m: &RunManifest) -> Vec<SweepPoint> {
    let Invocation::Sweep { grid, .. } = &m.invocation else {
        return Vec::new();
    };
    grid.iter()
        .map(|&v| {
            let rows: Vec<&RunRow> = m
                .rows
                .iter()
                .zip(&m.points)
                .filter(|(_, &p)| p == v)
                .map(|(r, _)| r)
                .collect();
            let stat = |name| MeanErr::of(&rows.iter().map(|r| metric(r, name)).collect::<Vec<_>>());
            SweepPoint {
                value: v,
                ms: stat("ms"),
                sc: stat("sc"),
                iq: stat("iq"),
                psnr: stat("psnr"),
                overall: stat("overall"),
                nfe_total: rows.iter().map(|r| r.nfe_total() as f64).sum::<f64>() / rows.len().max(1) as f64,
            }
        })
        .collect()
}

/// `sweep`: EVS over the dataset at every grid point of one axis.
pub fn cmd_sweep(
    cfg: &BenchConfig,
    axis: SweepAxis,
    grid: &[f64],
    dataset: Option<&Path>,
    out: &Path,
) -> Result<RunManifest> {
    let lab = Lab::new(cfg)?;
    sweep_with_lab(&lab, axis, grid, dataset, out)
}

fn sweep_with_lab(lab: &Lab, axis: SweepAxis, grid: &[f64], dataset: Option<&Path>, out: &Path) -> Result<RunManifest> {
    if grid.is_empty() {
        return Err(BenchError::Usage("sweep grid is empty".into()));
    }
    let configs = grid
        .iter()
        .map(|&v| sweep_point(lab, axis, v))
        .collect::<Result<Vec<_>>>()?;
    ensure_dir(out)?;
    let items = load_items(lab, dataset)?;

    let dataset = dataset.map(absolute).transpose()?;
    let mut m = RunManifest::new(
        Invocation::Sweep {
            axis,
            grid: grid.to_vec(),
            dataset,
        },
        lab.cfg.clone(),
    );
    let mut outputs = Vec::new();
    for (&v, pcfg) in grid.iter().zip(&configs) {
        let results = map_items(&items, lab.cfg.single_thread, |item| run_item(lab, Pipeline::Evs, pcfg, item))?;
        let (rows, outs): (Vec<RunRow>, Vec<Latent>) = results.into_iter().unzip();
        m.points.extend(std::iter::repeat_n(v, rows.len()));
        m.rows.extend(rows);
        outputs.push(outs);
    }
    let hash = m.seal().to_string();

    let points = sweep_points(&m);
    let path = out.join("sweep.csv");
    {
        let mut w = csv_writer(&path)?;
        let err = |e| csv_error(&path, e);
        let mut header = vec![axis.name().to_string(), "n".into()];
        for name in METRICS {
            header.push(format!("{name}_mean"));
            header.push(format!("{name}_stderr"));
        }
        header.push("nfe_total".into());
        w.write_record(&header).map_err(err)?;
        for p in &points {
            let mut rec = vec![p.value.to_string(), items.len().to_string()];
            for s in [p.ms, p.sc, p.iq, p.psnr, p.overall] {
                rec.push(s.mean.to_string());
                rec.push(s.stderr.to_string());
            }
            rec.push(p.nfe_total.to_string());
            w.write_record(&rec).map_err(err)?;
        }
        w.flush().map_err(|e| BenchError::io(&path, e))?;
    }
    m.add_artifact(out, "sweep.csv")?;
    write_run_csv(&out.join("sweep_rows.csv"), &m.rows)?;
    m.add_artifact(out, "sweep_rows.csv")?;
    for (k, outs) in outputs.iter().enumerate() {
        let name = format!("outputs_{k:02}.evslat");
        write_outputs(out, &name, outs)?;
        m.add_artifact(out, &name)?;
    }
    for name in METRICS {
        let series = Series {
            name: format!("evs {name}"),
            style: Style::Line,
            points: points
                .iter()
                .map(|p| {
                    let s = match name {
                        "ms" => p.ms,
                        "sc" => p.sc,
                        "iq" => p.iq,
                        "psnr" => p.psnr,
                        _ => p.overall,
                    };
                    (p.value, s.mean, s.stderr)
                })
                .collect(),
        };
        let svg = Plot {
            title: &format!("{name} vs {}", axis.name()),
            x_label: axis.name(),
            y_label: name,
            categories: &[],
            series: vec![series],
        }
        .render(&hash);
        let file = format!("sweep_{name}.svg");
        write_text(&out.join(&file), &svg)?;
        m.add_artifact(out, &file)?;
    }
    m.write(out)?;
    Ok(m)
}

/// `frontier`: SDEdit versus SFI on the styled suite.
pub fn cmd_frontier(cfg: &BenchConfig, out: &Path) -> Result<RunManifest> {
    let lab = Lab::new(cfg)?;
    frontier_with_lab(&lab, out)
}

fn frontier_with_lab(lab: &Lab, out: &Path) -> Result<RunManifest> {
    ensure_dir(out)?;
    let net = lab.net()?;
    let summary = run_frontier(lab, &net)?;
    let mut m = RunManifest::new(Invocation::Frontier, lab.cfg.clone());
    m.frontier = Some(summary.clone());
    let hash = m.seal().to_string();

    let path = out.join("frontier.csv");
    {
        let mut w = csv_writer(&path)?;
        let err = |e| csv_error(&path, e);
        w.write_record(["method", "t", "layers", "gamma", "ms", "psnr"]).map_err(err)?;
        for p in &summary.points {
            w.write_record([
                match p.method {
                    Method::Sdedit => "sdedit".to_string(),
                    Method::Sfi => "sfi".to_string(),
                },
                p.t.to_string(),
                p.layers.clone().unwrap_or_default(),
                p.gamma.map(|g| g.to_string()).unwrap_or_default(),
                p.ms.to_string(),
                p.psnr.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| BenchError::io(&path, e))?;
    }
    m.add_artifact(out, "frontier.csv")?;
    write_text(&out.join("frontier.svg"), &frontier_svg(&summary, &hash))?;
    m.add_artifact(out, "frontier.svg")?;
    let net_file = "net.evsnet";
    io::save(out.join(net_file), |w| io::write_net(w, &*net)).map_err(at_path(&out.join(net_file)))?;
    m.add_artifact(out, net_file)?;
    m.write(out)?;
    Ok(m)
}

fn frontier_svg(summary: &FrontierSummary, hash: &str) -> String {
    let mut series = Vec::new();
    for (method, name) in [(Method::Sdedit, "sdedit"), (Method::Sfi, "sfi")] {
        let pts: Vec<(f64, f64)> = summary
            .points
            .iter()
            .filter(|p| p.method == method)
            .map(|p| (p.ms, p.psnr))
            .collect();
        series.push(Series {
            name: name.to_string(),
            style: Style::Markers,
            points: pts.iter().map(|&(x, y)| (x, y, 0.0)).collect(),
        });
        let mut xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        series.push(Series {
            name: format!("{name} frontier"),
            style: Style::Line,
            points: xs.iter().map(|&m| (m, envelope(&pts, m), 0.0)).collect(),
        });
    }
    Plot {
        title: &format!("frontier (dominance {:.2})", summary.dominance),
        x_label: "motion smoothness",
        y_label: "PSNR to input (dB)",
        categories: &[],
        series,
    }
    .render(hash)
}

/// Per-pipeline means across one or more run manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub pipeline: String,
    pub n: usize,
    pub ms: f64,
    pub sc: f64,
    pub iq: f64,
    pub psnr: f64,
    pub overall: f64,
    pub nfe_total: f64,
    pub wall_time: f64,
    /// NFE of the iterated baseline over this pipeline's NFE.
    pub speedup: Option<f64>,
}

pub const REPORT_CSV_HEADER: [&str; 10] = [
    "pipeline", "n", "ms", "sc", "iq", "psnr", "overall", "nfe_total", "wall_time", "speedup",
];

pub fn aggregate(manifests: &[RunManifest]) -> Result<Vec<ReportRow>> {
    let mut groups: BTreeMap<Pipeline, Vec<&RunRow>> = BTreeMap::new();
    for m in manifests {
        let Invocation::Run { pipeline, .. } = m.invocation else {
            return Err(BenchError::Config("report accepts manifests of the run command only".into()));
        };
        groups.entry(pipeline).or_default().extend(&m.rows);
    }
    let mean = |rows: &[&RunRow], f: &dyn Fn(&RunRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / rows.len() as f64;
    let mut out: Vec<ReportRow> = groups
        .iter()
        .filter(|(_, rows)| !rows.is_empty())
        .map(|(p, rows)| ReportRow {
            pipeline: p.name().to_string(),
            n: rows.len(),
            ms: mean(rows, &|r| r.ms),
            sc: mean(rows, &|r| r.sc),
            iq: mean(rows, &|r| r.iq),
            psnr: mean(rows, &|r| r.psnr),
            overall: mean(rows, &|r| r.overall),
            nfe_total: mean(rows, &|r| r.nfe_total() as f64),
            wall_time: mean(rows, &|r| r.wall_time),
            speedup: None,
        })
        .collect();
    if let Some(base) = out.iter().find(|r| r.pipeline == "iterated").map(|r| r.nfe_total) {
        for r in &mut out {
            r.speedup = Some(base / r.nfe_total);
        }
    }
    Ok(out)
}

/// `report`: summary table over run manifests.
pub fn cmd_report(manifest_paths: &[PathBuf], out: &Path) -> Result<Vec<ReportRow>> {
    if manifest_paths.is_empty() {
        return Err(BenchError::Usage("report needs at least one manifest".into()));
    }
    let manifests = manifest_paths
        .iter()
        .map(|p| RunManifest::read(p))
        .collect::<Result<Vec<_>>>()?;
    let rows = aggregate(&manifests)?;
    ensure_dir(out)?;
    let joined: String = manifests.iter().map(|m| m.content_hash.as_str()).collect::<Vec<_>>().join(",");
    let hash = crate::hash::sha256_hex(joined.as_bytes());

    let path = out.join("summary.csv");
    let mut w = csv_writer(&path)?;
    let err = |e| csv_error(&path, e);
    w.write_record(REPORT_CSV_HEADER).map_err(err)?;
    for r in &rows {
        w.write_record([
            r.pipeline.clone(),
            r.n.to_string(),
            r.ms.to_string(),
            r.sc.to_string(),
            r.iq.to_string(),
            r.psnr.to_string(),
            r.overall.to_string(),
            r.nfe_total.to_string(),
            r.wall_time.to_string(),
            r.speedup.map(|s| s.to_string()).unwrap_or_default(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| BenchError::io(&path, e))?;

    let cats: Vec<String> = rows.iter().map(|r| r.pipeline.clone()).collect();
    let svg = Plot {
        title: "overall score by pipeline",
        x_label: "pipeline",
        y_label: "overall",
        categories: &cats,
        series: vec![Series {
            name: "overall".into(),
            style: Style::Bars,
            points: rows.iter().enumerate().map(|(i, r)| (i as f64, r.overall, 0.0)).collect(),
        }],
    }
    .render(&hash);
    write_text(&out.join("summary.svg"), &svg)?;
    Ok(rows)
}

/// `train`: fits the attention denoiser on the temporal world and saves it.
pub fn cmd_train(cfg: &BenchConfig, out: &Path) -> Result<TrainReport> {
    cfg.validate()?;
    let (_, tw) = evs_core::models::build_worlds::<f64>(&cfg.world, cfg.seed)?;
    let sched_v = cfg.schedule_v.build()?;
    let cfg = BenchConfig {
        net_path: None,
        ..cfg.clone()
    };
    let (net, report) = obtain_net(&cfg, &tw, &sched_v)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    io::save(out, |w| io::write_net(w, &net)).map_err(at_path(out))?;
    Ok(report.expect("training always reports"))
}

/// Re-executes a manifest in single-thread mode into `out`.
pub fn replay(manifest: &Path, out: &Path) -> Result<RunManifest> {
    let m = RunManifest::read(manifest)?;
    let cfg = BenchConfig {
        single_thread: true,
        ..m.config.clone()
    };
    match &m.invocation {
        Invocation::Run { pipeline, dataset } => cmd_run(&cfg, *pipeline, dataset.as_deref(), out),
        Invocation::Sweep { axis, grid, dataset } => cmd_sweep(&cfg, *axis, grid, dataset.as_deref(), out),
        Invocation::Frontier => cmd_frontier(&cfg, out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_err_matches_hand_computation() {
        let s = MeanErr::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(MeanErr::of(&[7.0]).stderr, 0.0);
    }
}
