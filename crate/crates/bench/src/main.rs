use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use evs_bench::commands::{cmd_frontier, cmd_gen, cmd_report, cmd_run, cmd_sweep, cmd_train, replay};
use evs_bench::manifest::SweepAxis;
use evs_bench::pipelines::Pipeline;
use evs_bench::{BenchConfig, Result};

#[derive(Parser)]
#[command(name = "evs-bench", version, about = "EVS toy-latent benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, env = "EVS_SEED")]
    seed: Option<u64>,
    /// Override a config key, e.g. `--set pipeline.t_v=6`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Process items sequentially (bit-reproducible mode).
    #[arg(long)]
    single_thread: bool,
}

impl Common {
    fn resolve(&self) -> Result<BenchConfig> {
        let mut cfg = match &self.config {
            Some(p) => BenchConfig::load(p)?,
            None => BenchConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if self.single_thread {
            cfg.single_thread = true;
        }
        cfg.with_overrides(&self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the degraded dataset.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        items: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one pipeline over a dataset, or replay a manifest.
    Run {
        #[command(flatten)]
        common: Common,
        /// t2i, t2v, iv, vi, evs or iterated.
        #[arg(long, required_unless_present = "manifest")]
        pipeline: Option<String>,
        /// Dataset directory written by `gen`; generated in memory if absent.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Re-execute this manifest single-threaded instead.
        #[arg(long, conflicts_with_all = ["pipeline", "dataset"])]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep one EVS hyperparameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// t_T2V, t_V, n_V or gamma.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<f64>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// SDEdit versus SFI frontier on the styled suite.
    Frontier {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate run manifests into a summary table.
    Report {
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the attention denoiser and save it.
    Train {
        #[command(flatten)]
        common: Common,
        /// Output network file.
        #[arg(long)]
        out: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { common, items, out } => {
            let mut cfg = common.resolve()?;
            if let Some(n) = items {
                cfg.dataset.items = n;
                cfg.validate()?;
            }
            let index = cmd_gen(&cfg, &out)?;
            println!("wrote {} items to {}", index.items.len(), out.display());
        }
        Command::Run {
            common,
            pipeline,
            dataset,
            manifest,
            out,
        } => {
            let m = match manifest {
                Some(path) => replay(&path, &out)?,
                None => {
                    let cfg = common.resolve()?;
                    let pipeline: Pipeline = pipeline.expect("required by clap").parse()?;
                    cmd_run(&cfg, pipeline, dataset.as_deref(), &out)?
                }
            };
            println!("{} rows, manifest {}", m.rows.len(), out.join("manifest.json").display());
        }
        Command::Sweep {
            common,
            axis,
            grid,
            dataset,
            out,
        } => {
            let cfg = common.resolve()?;
            let axis = SweepAxis::parse(&axis)?;
            let m = cmd_sweep(&cfg, axis, &grid, dataset.as_deref(), &out)?;
            for p in evs_bench::commands::sweep_points(&m) {
                println!(
                    "{}={}: ms {:.5} sc {:.4} iq {:.3} psnr {:.2} overall {:.4}",
                    axis.name(),
                    p.value,
                    p.ms.mean,
                    p.sc.mean,
                    p.iq.mean,
                    p.psnr.mean,
                    p.overall.mean
                );
            }
        }
        Command::Frontier { common, out } => {
            let cfg = common.resolve()?;
            let m = cmd_frontier(&cfg, &out)?;
            let f = m.frontier.expect("frontier summary");
            println!("input ms {:.5}, dominance {:.3}", f.input_ms, f.dominance);
        }
        Command::Report { manifests, out } => {
            let rows = cmd_report(&manifests, &out)?;
            println!("{:10} {:>4} {:>8} {:>7} {:>8} {:>7} {:>8} {:>6} {:>8}", "pipeline", "n", "ms", "sc", "iq", "psnr", "overall", "nfe", "speedup");
            for r in rows {
                println!(
                    "{:10} {:>4} {:>8.5} {:>7.4} {:>8.3} {:>7.2} {:>8.4} {:>6.1} {:>8}",
                    r.pipeline,
                    r.n,
                    r.ms,
                    r.sc,
                    r.iq,
                    r.psnr,
                    r.overall,
                    r.nfe_total,
                    r.speedup.map(|s| format!("{s:.3}")).unwrap_or_default()
                );
            }
        }
        Command::Train { common, out } => {
            let cfg = common.resolve()?;
            let report = cmd_train(&cfg, &out)?;
            println!(
                "held-out loss {:.4} -> {:.4}, saved {}",
                report.initial_loss,
                report.final_loss,
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("evs-bench: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

