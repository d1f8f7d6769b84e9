//! `otrom` command-line tool: FOM data generation, DI/POD reconstruction,
//! multi-fidelity and parametric correction, metrics and an end-to-end demo.
//!
//! Exit codes: 0 success, 1 other failure, 2 invalid config or unreadable
//! input, 3 unstable FOM run, 4 non-uniform checkpoint count, 5 incompatible
//! grids or times, 6 value out of range, 7 evaluation at a training parameter
//! without `--allow-seen`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use otrom::config::ExperimentConfig;
use otrom::io::{read_parametric_manifest, read_trajectory};
use otrom::parametric::{ParametricDataset, PmfStrategy};
use otrom::pipeline::{self, Reconstruction, RunOptions};
use otrom::Error;

#[derive(Parser, Debug)]
#[command(name = "otrom", version, about = "Optimal-transport reduced-order models for phase fields")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Config file with `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, `key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; overrides `io.out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated checkpoint counts to sweep instead of `rom.n_c`.
    #[arg(long, global = true, value_delimiter = ',')]
    sweep_nc: Vec<usize>,
    /// Write reconstructed or corrected fields next to the CSVs.
    #[arg(long, global = true)]
    dump_fields: bool,
    /// Clip reconstructed fields to [0, 1] before evaluation.
    #[arg(long, global = true)]
    clamp: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the full-order model and write its trajectory.
    Fom,
    /// Displacement-interpolation reconstruction of a trajectory.
    Di {
        /// Trajectory manifest.
        #[arg(long)]
        traj: PathBuf,
    },
    /// POD projection of a trajectory onto its checkpoint snapshots.
    Pod {
        #[arg(long)]
        traj: PathBuf,
    },
    /// Multi-fidelity correction of an LF trajectory against HF data.
    Mf {
        #[arg(long)]
        lf: PathBuf,
        #[arg(long)]
        hf: PathBuf,
    },
    /// Parametric correction at `pmf.mu_star`.
    ///
    /// Without `--dataset`, all training and validation runs are generated
    /// from the config first.
    Pmf {
        /// Parametric manifest of the training runs.
        #[arg(long, requires_all = ["lf", "hf"])]
        dataset: Option<PathBuf>,
        /// LF trajectory at `pmf.mu_star`.
        #[arg(long)]
        lf: Option<PathBuf>,
        /// HF validation trajectory at `pmf.mu_star`.
        #[arg(long)]
        hf: Option<PathBuf>,
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
        /// Allow `pmf.mu_star` to be one of the training parameters.
        #[arg(long)]
        allow_seen: bool,
    },
    /// Bounds, area and (with a reference) errors of a trajectory.
    Metrics {
        #[arg(long)]
        traj: PathBuf,
        /// Reference trajectory; a coarser `--traj` is prolonged onto its grid.
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
    },
    /// LF and HF runs followed by multi-fidelity correction.
    Demo,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum StrategyArg {
    #[value(name = "hf_first")]
    HfFirst,
    #[value(name = "residual_first")]
    ResidualFirst,
    Both,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }

    /// Config and input problems.
    fn setup(e: Error) -> Self {
        Failure::new(2, e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::InvalidArgument(_) | Error::Format { .. } | Error::Io(_) => 2,
            Error::UnstableRun { .. } => 3,
            Error::NonUniformCount { .. } => 4,
            Error::GridMismatch(_)
            | Error::TimeMismatch(_)
            | Error::MissingLfNeighbors { .. }
            | Error::MissingLfSnapshot(_) => 5,
            Error::OutOfRange { .. } => 6,
            _ => 1,
        };
        Failure::new(code, e.to_string())
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::from_file(p).map_err(Failure::setup)?,
        None => ExperimentConfig::default(),
    };
    for pair in &common.overrides {
        cfg.set_pair(pair).map_err(Failure::setup)?;
    }
    if let Some(out) = &common.out {
        cfg.io_out_dir = out.clone();
    }
    if let Ok(dir) = std::env::var("OTROM_CACHE_DIR") {
        cfg.io_cache_dir = (!dir.is_empty()).then(|| PathBuf::from(dir));
    }
    cfg.validate().map_err(Failure::setup)?;
    Ok(cfg)
}

fn read_input(path: &Path) -> Result<otrom::Trajectory, Failure> {
    read_trajectory(path).map_err(Failure::setup)
}

fn read_dataset(path: &Path) -> Result<ParametricDataset, Failure> {
    let entries = read_parametric_manifest(path).map_err(Failure::setup)?;
    let mut params = Vec::new();
    let mut hf = Vec::new();
    let mut lf = Vec::new();
    for e in entries {
        params.push(e.param);
        hf.push(read_input(&e.hf)?);
        lf.push(match &e.lf {
            Some(p) => Some(read_input(p)?),
            None => None,
        });
    }
    ParametricDataset::new(params, hf, lf).map_err(Failure::setup)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli.common)?;
    let out = cfg.io_out_dir.clone();
    let opts = RunOptions {
        n_cs: cli.common.sweep_nc.clone(),
        dump_fields: cli.common.dump_fields,
        clamp: cli.common.clamp,
    };
    match cli.command {
        Command::Fom => {
            let traj = pipeline::cmd_fom(&cfg, &out)?;
            println!("wrote {} snapshots to {}", traj.len(), out.display());
        }
        Command::Di { traj } => rom(&cfg, &read_input(&traj)?, Reconstruction::Di, &opts, &out)?,
        Command::Pod { traj } => rom(&cfg, &read_input(&traj)?, Reconstruction::Pod, &opts, &out)?,
        Command::Mf { lf, hf } => {
            let (lf, hf) = (read_input(&lf)?, read_input(&hf)?);
            let outcome = pipeline::cmd_mf(&cfg, &lf, &hf, &opts, &out)?;
            report_corrections(&outcome)?;
        }
        Command::Pmf {
            dataset,
            lf,
            hf,
            strategy,
            allow_seen,
        } => {
            let strategies = match strategy {
                None => vec![cfg.pmf_strategy],
                Some(StrategyArg::HfFirst) => vec![PmfStrategy::HfFirst],
                Some(StrategyArg::ResidualFirst) => vec![PmfStrategy::ResidualFirst],
                Some(StrategyArg::Both) => vec![PmfStrategy::HfFirst, PmfStrategy::ResidualFirst],
            };
            let mu = cfg.pmf_mu_star;
            let seen = |ds: &ParametricDataset| ds.contains(mu) && !allow_seen;
            let seen_failure = || {
                Failure::new(
                    7,
                    format!("mu_star = {mu} is a training parameter; pass --allow-seen to evaluate it anyway"),
                )
            };
            let (ds, lf_star, hf_star) = match (dataset, lf, hf) {
                (Some(d), Some(l), Some(h)) => {
                    let ds = read_dataset(&d)?;
                    if seen(&ds) {
                        return Err(seen_failure());
                    }
                    (ds, read_input(&l)?, read_input(&h)?)
                }
                _ => {
                    if cfg.pmf_param_list.iter().any(|&p| (p - mu).abs() <= 1e-12) && !allow_seen {
                        return Err(seen_failure());
                    }
                    let runs = pipeline::generate_parametric_runs(&cfg)?;
                    (runs.dataset, runs.lf_star, runs.hf_star)
                }
            };
            let outcome = pipeline::cmd_pmf(&cfg, &ds, &lf_star, &hf_star, &strategies, &opts, &out)?;
            report_corrections(&outcome)?;
        }
        Command::Metrics { traj, reference } => {
            let traj = read_input(&traj)?;
            let reference = reference.as_deref().map(read_input).transpose()?;
            let report = pipeline::cmd_metrics(&traj, reference.as_ref(), &out)?;
            if let Ok(mean) = report.mean_rel_l2() {
                println!("mean rel_l2 {mean}");
            }
            println!("overshoot {} undershoot {}", report.overshoot(), report.undershoot());
        }
        Command::Demo => {
            let outcome = pipeline::cmd_demo(&cfg, &opts, &out)?;
            report_corrections(&outcome)?;
        }
    }
    Ok(())
}

fn rom(cfg: &ExperimentConfig, traj: &otrom::Trajectory, method: Reconstruction, opts: &RunOptions, out: &Path) -> Result<(), Failure> {
    for r in pipeline::cmd_rom(cfg, traj, method, opts, out)? {
        println!("n_c {} mean rel_l2 {}", r.n_c, r.report.mean_rel_l2()?);
    }
    Ok(())
}

fn report_corrections(outcome: &pipeline::CorrectionOutcome) -> Result<(), Failure> {
    println!("uncorrected mean rel_l2 {}", outcome.uncorrected.mean_rel_l2()?);
    for r in &outcome.runs {
        let label = r.strategy.map(|s| s.to_string()).unwrap_or_else(|| "mf".into());
        println!("{label} n_c {} mean rel_l2 {}", r.n_c, r.report.mean_rel_l2()?);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
