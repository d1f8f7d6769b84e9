//! End-to-end experiment drivers behind the command-line tool.
//!
//! Each driver takes a resolved [`ExperimentConfig`] plus in-memory inputs,
//! writes its CSV tables (and optionally fields) under an output directory,
//! and returns the same numbers so callers can check them without re-reading
//! files. Per-checkpoint-count series go to `nc_<n>/` subdirectories; the
//! top level holds `summary.csv`, `plan_stats.csv`, the resolved config and
//! the version string.

use std::path::Path;

use log::info;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::displacement::{DiPair, OtContext, Segment, SignedSegment};
use crate::error::{Error, Result};
use crate::field::{to_grid, Fidelity, ScalarField, Trajectory};
use crate::fom::run_fom;
use crate::io::{atomic_write, write_trajectory, CsvTable, PlanCache};
use crate::metrics::{integrated_abs_deviation, interfacial_area, mass_drift, relative_l1, relative_l2, AREA_BAND};
use crate::multifidelity::{lf_on_grid, ResidualRom};
use crate::ot::entropic_cost;
use crate::parametric::{ParametricDataset, PmfRom, PmfStrategy};
use crate::pod::compute_pod;
use crate::rom_di::{select_uniform_checkpoints, CheckpointSet};
use crate::VERSION;

/// Comparison convention stated in the first line of every CSV.
pub const CSV_CONVENTION: &str =
    "comparison on the HF grid; rel_l2 and rel_l1 are cell-area weighted relative L2 and L1 errors";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    /// Checkpoint counts to run; empty means `rom.n_c`.
    pub n_cs: Vec<usize>,
    pub dump_fields: bool,
    /// Clip reconstructed fields to `[0, 1]` before evaluation.
    pub clamp: bool,
}

impl RunOptions {
    fn checkpoint_counts(&self, cfg: &ExperimentConfig) -> Vec<usize> {
        if self.n_cs.is_empty() {
            vec![cfg.rom_n_c]
        } else {
            self.n_cs.clone()
        }
    }
}

/// Transport context for a config, backed by the plan cache when one is set.
pub fn ot_context(cfg: &ExperimentConfig) -> OtContext {
    let interp = cfg.interp();
    match &cfg.io_cache_dir {
        Some(dir) => OtContext::with_cache(interp, PlanCache::new(dir)),
        None => OtContext::new(interp),
    }
}

/// Writes `config.txt` (fully resolved) and `VERSION` into `dir`.
pub fn write_provenance(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    atomic_write(&dir.join("config.txt"), cfg.to_text().as_bytes())?;
    atomic_write(&dir.join("VERSION"), format!("{VERSION}\n").as_bytes())
}

fn fmt(v: f64) -> String {
    v.to_string()
}

fn clamp_unit(f: ScalarField, clamp: bool) -> ScalarField {
    if clamp {
        f.map(|v| v.clamp(0.0, 1.0))
    } else {
        f
    }
}

fn dump(dir: &Path, grid_fields: (&[f64], Vec<ScalarField>), param: f64) -> Result<()> {
    let (times, fields) = grid_fields;
    let grid = *fields.first().ok_or(Error::Empty)?.grid();
    let traj = Trajectory::new(grid, times.to_vec(), fields, Fidelity::Synthetic, param)?;
    write_trajectory(dir, &traj).map(|_| ())
}

/// Per-time diagnostics of a field sequence, optionally against reference fields.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesReport {
    pub times: Vec<f64>,
    /// Empty when no reference was given.
    pub rel_l2: Vec<f64>,
    pub rel_l1: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// Interfacial area inside the standard band.
    pub area: Vec<f64>,
    /// `area` divided by its first value.
    pub area_normalized: Vec<f64>,
}

impl SeriesReport {
    pub fn evaluate(times: &[f64], fields: &[ScalarField], reference: Option<&[ScalarField]>) -> Result<SeriesReport> {
        if times.len() != fields.len() || reference.is_some_and(|r| r.len() != fields.len()) {
            return Err(Error::InvalidArgument("series lengths differ".into()));
        }
        if fields.is_empty() {
            return Err(Error::Empty);
        }
        let (lo, hi) = AREA_BAND;
        let rows = (0..fields.len())
            .into_par_iter()
            .map(|k| {
                let f = &fields[k];
                let errs = match reference {
                    Some(r) => Some((relative_l2(f, &r[k])?, relative_l1(f, &r[k])?)),
                    None => None,
                };
                Ok((errs, f.min(), f.max(), interfacial_area(f, lo, hi)))
            })
            .collect::<Result<Vec<_>>>()?;
        let area: Vec<f64> = rows.iter().map(|r| r.3).collect();
        if area[0] <= 0.0 {
            return Err(Error::ZeroFirstValue);
        }
        Ok(SeriesReport {
            times: times.to_vec(),
            rel_l2: rows.iter().filter_map(|r| r.0.map(|e| e.0)).collect(),
            rel_l1: rows.iter().filter_map(|r| r.0.map(|e| e.1)).collect(),
            min: rows.iter().map(|r| r.1).collect(),
            max: rows.iter().map(|r| r.2).collect(),
            area_normalized: area.iter().map(|a| a / area[0]).collect(),
            area,
        })
    }

    pub fn mean_rel_l2(&self) -> Result<f64> {
        if self.rel_l2.is_empty() {
            return Err(Error::Empty);
        }
        Ok(self.rel_l2.iter().sum::<f64>() / self.rel_l2.len() as f64)
    }

    /// `max(0, max_t max φ − 1)`.
    pub fn overshoot(&self) -> f64 {
        self.max.iter().map(|m| m - 1.0).fold(0.0, f64::max)
    }

    /// `max(0, −min_t min φ)`.
    pub fn undershoot(&self) -> f64 {
        self.min.iter().map(|m| -m).fold(0.0, f64::max)
    }

    /// Time-integrated `|area − other.area|`.
    pub fn area_deviation(&self, other: &SeriesReport) -> Result<f64> {
        integrated_abs_deviation(&self.times, &self.area, &other.area)
    }

    /// Time-integrated deviation of the upper bound plus that of the lower bound.
    pub fn bounds_deviation(&self, other: &SeriesReport) -> Result<f64> {
        Ok(integrated_abs_deviation(&self.times, &self.max, &other.max)?
            + integrated_abs_deviation(&self.times, &self.min, &other.min)?)
    }

    /// Writes `error_vs_time.csv` (with a reference), `bounds.csv` and `area.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        if !self.rel_l2.is_empty() {
            let mut t = CsvTable::new(CSV_CONVENTION, &["time", "rel_l2", "rel_l1"]);
            for k in 0..self.times.len() {
                t.push(vec![fmt(self.times[k]), fmt(self.rel_l2[k]), fmt(self.rel_l1[k])]);
            }
            t.write(&dir.join("error_vs_time.csv"))?;
        }
        let mut b = CsvTable::new(CSV_CONVENTION, &["time", "min", "max"]);
        let mut a = CsvTable::new(CSV_CONVENTION, &["time", "raw", "normalized"]);
        for k in 0..self.times.len() {
            b.push(vec![fmt(self.times[k]), fmt(self.min[k]), fmt(self.max[k])]);
            a.push(vec![fmt(self.times[k]), fmt(self.area[k]), fmt(self.area_normalized[k])]);
        }
        b.write(&dir.join("bounds.csv"))?;
        a.write(&dir.join("area.csv"))
    }
}

/// Diagnostics of one entropic plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanStat {
    pub stage: String,
    pub n_c: usize,
    pub pair: usize,
    /// `full`, `positive` or `negative`.
    pub part: &'static str,
    pub epsilon: f64,
    pub iterations: usize,
    pub marginal_residual: f64,
    pub source_support: usize,
    pub target_support: usize,
    pub cost: f64,
}

struct PlanRef<'a> {
    pair: usize,
    part: &'static str,
    di: &'a DiPair,
}

fn segment_refs(segments: &[SignedSegment]) -> Vec<PlanRef<'_>> {
    let mut out = Vec::new();
    for (k, s) in segments.iter().enumerate() {
        for (part, seg) in [("positive", &s.pos), ("negative", &s.neg)] {
            if let Segment::Transport(di) = seg {
                out.push(PlanRef { pair: k, part, di });
            }
        }
    }
    out
}

fn plan_stats(stage: &str, n_c: usize, refs: &[PlanRef<'_>]) -> Vec<PlanStat> {
    refs.par_iter()
        .map(|r| {
            let p = &r.di.plan;
            PlanStat {
                stage: stage.to_string(),
                n_c,
                pair: r.pair,
                part: r.part,
                epsilon: p.epsilon,
                iterations: p.iterations,
                marginal_residual: p.marginal_residual,
                source_support: p.source.len(),
                target_support: p.target.len(),
                cost: entropic_cost(p),
            }
        })
        .collect()
}

fn write_plan_stats(path: &Path, stats: &[PlanStat]) -> Result<()> {
    let mut t = CsvTable::new(
        CSV_CONVENTION,
        &[
            "stage",
            "n_c",
            "pair",
            "part",
            "epsilon",
            "iterations",
            "marginal_residual",
            "source_support",
            "target_support",
            "cost",
        ],
    );
    for s in stats {
        t.push(vec![
            s.stage.clone(),
            s.n_c.to_string(),
            s.pair.to_string(),
            s.part.to_string(),
            fmt(s.epsilon),
            s.iterations.to_string(),
            fmt(s.marginal_residual),
            s.source_support.to_string(),
            s.target_support.to_string(),
            fmt(s.cost),
        ]);
    }
    t.write(path)
}

/// Runs the FOM described by the `fom.*` keys and writes the trajectory,
/// its bounds and area series, and a one-row summary.
pub fn cmd_fom(cfg: &ExperimentConfig, out: &Path) -> Result<Trajectory> {
    let run = cfg.fom_single();
    info!("running FOM on {} up to t = {}", run.grid, run.t_end);
    let traj = run_fom(&run)?;
    write_trajectory(out, &traj)?;
    let report = SeriesReport::evaluate(traj.times(), traj.fields(), None)?;
    report.write(out)?;
    let mut t = CsvTable::new(CSV_CONVENTION, &["grid", "n_snapshots", "mass_drift", "min", "max"]);
    t.push(vec![
        traj.grid().nx.to_string(),
        traj.len().to_string(),
        fmt(mass_drift(&traj)),
        fmt(report.min.iter().copied().fold(f64::INFINITY, f64::min)),
        fmt(report.max.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
    ]);
    t.write(&out.join("summary.csv"))?;
    write_provenance(out, cfg)?;
    Ok(traj)
}

/// Single-trajectory reconstruction method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reconstruction {
    Di,
    Pod,
}

/// Reconstruction of every snapshot from `n_c` uniform checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct RomRun {
    pub n_c: usize,
    pub report: SeriesReport,
    /// Plans of a DI run; empty for POD.
    pub plan_stats: Vec<PlanStat>,
    /// POD modes kept by the energy criterion; zero for DI.
    pub n_modes: usize,
    pub singular_values: Vec<f64>,
}

/// Reconstructs every snapshot of `traj` from `n_c` checkpoints.
pub fn reconstruct_trajectory(
    cfg: &ExperimentConfig,
    traj: &Trajectory,
    n_c: usize,
    method: Reconstruction,
    ctx: &OtContext,
    opts: &RunOptions,
    dump_dir: Option<&Path>,
) -> Result<RomRun> {
    let indices = select_uniform_checkpoints(traj.len(), n_c)?;
    let times = traj.times();
    let (fields, plan_stats, n_modes, singular_values) = match method {
        Reconstruction::Di => {
            let cs = CheckpointSet::build(traj, &indices, ctx)?;
            let fields = times
                .par_iter()
                .map(|&t| cs.query(t).map(|f| clamp_unit(f, opts.clamp)))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<PlanRef<'_>> = cs
                .pairs
                .iter()
                .enumerate()
                .map(|(pair, di)| PlanRef { pair, part: "full", di })
                .collect();
            (fields, plan_stats("di", n_c, &refs), 0, Vec::new())
        }
        Reconstruction::Pod => {
            let snaps: Vec<ScalarField> = indices.iter().map(|&k| traj.field(k).clone()).collect();
            let basis = compute_pod(&snaps, cfg.rom_energy_tol, cfg.rom_pod_center)?;
            let fields = traj
                .fields()
                .par_iter()
                .map(|f| basis.reconstruct(f).map(|g| clamp_unit(g, opts.clamp)))
                .collect::<Result<Vec<_>>>()?;
            (fields, Vec::new(), basis.n_r(), basis.singular_values().to_vec())
        }
    };
    let report = SeriesReport::evaluate(times, &fields, Some(traj.fields()))?;
    if let Some(dir) = dump_dir {
        dump(dir, (times, fields), traj.param)?;
    }
    Ok(RomRun {
        n_c,
        report,
        plan_stats,
        n_modes,
        singular_values,
    })
}

/// DI or POD reconstruction of one trajectory for every requested checkpoint count.
pub fn cmd_rom(
    cfg: &ExperimentConfig,
    traj: &Trajectory,
    method: Reconstruction,
    opts: &RunOptions,
    out: &Path,
) -> Result<Vec<RomRun>> {
    let ctx = ot_context(cfg);
    SeriesReport::evaluate(traj.times(), traj.fields(), None)?.write(&out.join("reference"))?;
    let mut runs = Vec::new();
    for n_c in opts.checkpoint_counts(cfg) {
        info!("{method:?} reconstruction with n_c = {n_c}");
        let dir = out.join(format!("nc_{n_c}"));
        let dump_dir = opts.dump_fields.then(|| dir.join("fields"));
        let run = reconstruct_trajectory(cfg, traj, n_c, method, &ctx, opts, dump_dir.as_deref())?;
        run.report.write(&dir)?;
        runs.push(run);
    }
    let mut summary = CsvTable::new(CSV_CONVENTION, &["n_c", "mean_rel_l2"]);
    for r in &runs {
        summary.push(vec![r.n_c.to_string(), fmt(r.report.mean_rel_l2()?)]);
    }
    summary.write(&out.join("summary.csv"))?;
    match method {
        Reconstruction::Di => {
            let stats: Vec<PlanStat> = runs.iter().flat_map(|r| r.plan_stats.clone()).collect();
            write_plan_stats(&out.join("plan_stats.csv"), &stats)?;
        }
        Reconstruction::Pod => {
            let mut t = CsvTable::new(CSV_CONVENTION, &["n_c", "index", "singular_value", "kept"]);
            for r in &runs {
                for (i, s) in r.singular_values.iter().enumerate() {
                    t.push(vec![r.n_c.to_string(), i.to_string(), fmt(*s), (i < r.n_modes).to_string()]);
                }
            }
            t.write(&out.join("pod_modes.csv"))?;
        }
    }
    write_provenance(out, cfg)?;
    Ok(runs)
}

/// Corrected model at one checkpoint count.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedRun {
    pub strategy: Option<PmfStrategy>,
    pub n_c: usize,
    pub report: SeriesReport,
    pub plan_stats: Vec<PlanStat>,
}

/// Output of a multi-fidelity or parametric experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionOutcome {
    /// Prolonged LF against HF.
    pub uncorrected: SeriesReport,
    /// HF bounds and area, no errors.
    pub hf: SeriesReport,
    pub runs: Vec<CorrectedRun>,
}

impl CorrectionOutcome {
    fn write_common(&self, out: &Path) -> Result<()> {
        self.uncorrected.write(&out.join("lf"))?;
        self.hf.write(&out.join("hf"))?;
        let lf_mean = self.uncorrected.mean_rel_l2()?;
        let mut summary = CsvTable::new(CSV_CONVENTION, &["strategy", "n_c", "mean_rel_l2", "lf_mean_rel_l2"]);
        for r in &self.runs {
            summary.push(vec![
                r.strategy.map(|s| s.to_string()).unwrap_or_else(|| "mf".into()),
                r.n_c.to_string(),
                fmt(r.report.mean_rel_l2()?),
                fmt(lf_mean),
            ]);
        }
        summary.write(&out.join("summary.csv"))?;
        let stats: Vec<PlanStat> = self.runs.iter().flat_map(|r| r.plan_stats.clone()).collect();
        write_plan_stats(&out.join("plan_stats.csv"), &stats)
    }
}

fn uncorrected_fields(lf: &Trajectory, hf: &Trajectory) -> Result<Vec<ScalarField>> {
    hf.times().par_iter().map(|&t| lf_on_grid(lf, t, hf.grid())).collect()
}

fn corrected_fields(rom: &ResidualRom, lf: &Trajectory, hf: &Trajectory, clamp: bool) -> Result<Vec<ScalarField>> {
    hf.times()
        .par_iter()
        .map(|&t| rom.correct(lf, t).map(|f| clamp_unit(f, clamp)))
        .collect()
}

/// Multi-fidelity correction of `lf` against `hf` for every requested checkpoint count.
pub fn cmd_mf(
    cfg: &ExperimentConfig,
    lf: &Trajectory,
    hf: &Trajectory,
    opts: &RunOptions,
    out: &Path,
) -> Result<CorrectionOutcome> {
    lf.grid().refinement_to(hf.grid())?;
    let ctx = ot_context(cfg);
    let base = uncorrected_fields(lf, hf)?;
    let uncorrected = SeriesReport::evaluate(hf.times(), &base, Some(hf.fields()))?;
    drop(base);
    let mut runs = Vec::new();
    for n_c in opts.checkpoint_counts(cfg) {
        info!("multi-fidelity correction with n_c = {n_c}");
        let indices = select_uniform_checkpoints(hf.len(), n_c)?;
        let rom = ResidualRom::build(hf, lf, &indices, &ctx)?;
        let fields = corrected_fields(&rom, lf, hf, opts.clamp)?;
        let report = SeriesReport::evaluate(hf.times(), &fields, Some(hf.fields()))?;
        let dir = out.join(format!("nc_{n_c}"));
        report.write(&dir)?;
        if opts.dump_fields {
            dump(&dir.join("fields"), (hf.times(), fields), hf.param)?;
        }
        let plan_stats = plan_stats("mf", n_c, &segment_refs(&rom.segments));
        runs.push(CorrectedRun {
            strategy: None,
            n_c,
            report,
            plan_stats,
        });
    }
    let outcome = CorrectionOutcome {
        uncorrected,
        hf: SeriesReport::evaluate(hf.times(), hf.fields(), None)?,
        runs,
    };
    outcome.write_common(out)?;
    write_provenance(out, cfg)?;
    Ok(outcome)
}

/// Parametric correction at the unseen parameter `mu_star`, validated against `hf_star`.
pub fn cmd_pmf(
    cfg: &ExperimentConfig,
    ds: &ParametricDataset,
    lf_star: &Trajectory,
    hf_star: &Trajectory,
    strategies: &[PmfStrategy],
    opts: &RunOptions,
    out: &Path,
) -> Result<CorrectionOutcome> {
    let mu = cfg.pmf_mu_star;
    let hf_grid = *ds.hf(0).grid();
    if *hf_star.grid() != hf_grid {
        return Err(Error::GridMismatch(format!(
            "validation run on {} for training runs on {hf_grid}",
            hf_star.grid()
        )));
    }
    if hf_star.times().len() != ds.hf(0).times().len()
        || hf_star.times().iter().zip(ds.hf(0).times()).any(|(a, b)| (a - b).abs() > 1e-10)
    {
        return Err(Error::TimeMismatch("validation and training runs have different output times".into()));
    }
    let ctx = ot_context(cfg);
    let base = uncorrected_fields(lf_star, hf_star)?;
    let uncorrected = SeriesReport::evaluate(hf_star.times(), &base, Some(hf_star.fields()))?;
    drop(base);
    let mut runs = Vec::new();
    for &strategy in strategies {
        for n_c in opts.checkpoint_counts(cfg) {
            info!("parametric correction ({strategy}) at mu = {mu} with n_c = {n_c}");
            let indices = select_uniform_checkpoints(hf_star.len(), n_c)?;
            let rom = PmfRom::build(ds, mu, lf_star, &indices, strategy, &ctx)?;
            let fields = corrected_fields(&rom.residual, lf_star, hf_star, opts.clamp)?;
            let report = SeriesReport::evaluate(hf_star.times(), &fields, Some(hf_star.fields()))?;
            let dir = out.join(format!("{strategy}_nc_{n_c}"));
            report.write(&dir)?;
            if opts.dump_fields {
                dump(&dir.join("fields"), (hf_star.times(), fields), mu)?;
                if !rom.synthetic_hf.is_empty() {
                    let (t, f): (Vec<f64>, Vec<ScalarField>) = rom.synthetic_hf.iter().cloned().unzip();
                    dump(&dir.join("synthetic_hf"), (&t, f), mu)?;
                }
            }
            let plan_stats = plan_stats(&strategy.to_string(), n_c, &segment_refs(&rom.residual.segments));
            runs.push(CorrectedRun {
                strategy: Some(strategy),
                n_c,
                report,
                plan_stats,
            });
        }
    }
    let outcome = CorrectionOutcome {
        uncorrected,
        hf: SeriesReport::evaluate(hf_star.times(), hf_star.fields(), None)?,
        runs,
    };
    outcome.write_common(out)?;
    write_provenance(out, cfg)?;
    Ok(outcome)
}

/// FOM runs backing a parametric experiment.
#[derive(Debug, Clone)]
pub struct ParametricRuns {
    pub dataset: ParametricDataset,
    pub lf_star: Trajectory,
    pub hf_star: Trajectory,
}

/// HF and LF runs at every `pmf.param_list` radius plus both fidelities at
/// `pmf.mu_star`. All runs share the HF interface thickness.
pub fn generate_parametric_runs(cfg: &ExperimentConfig) -> Result<ParametricRuns> {
    let (lf_n, hf_n) = (cfg.mf_lf_res, cfg.mf_hf_res);
    let mut jobs: Vec<(f64, usize, Fidelity)> = Vec::new();
    for &mu in cfg.pmf_param_list.iter().chain(std::iter::once(&cfg.pmf_mu_star)) {
        jobs.push((mu, hf_n, Fidelity::High));
        jobs.push((mu, lf_n, Fidelity::Low));
    }
    let mut trajs = jobs
        .par_iter()
        .map(|&(mu, n, label)| {
            info!("running {label} FOM at radius {mu}");
            run_fom(&cfg.fom_run(n, mu, hf_n, label))
        })
        .collect::<Result<Vec<_>>>()?;
    let lf_star = trajs.pop().expect("star runs");
    let hf_star = trajs.pop().expect("star runs");
    let mut hf = Vec::new();
    let mut lf = Vec::new();
    for pair in trajs.chunks_exact(2) {
        hf.push(pair[0].clone());
        lf.push(Some(pair[1].clone()));
    }
    Ok(ParametricRuns {
        dataset: ParametricDataset::new(cfg.pmf_param_list.clone(), hf, lf)?,
        lf_star,
        hf_star,
    })
}

/// Metrics of `traj`, against `reference` when given. A coarser `traj` is
/// prolonged onto the reference grid and matched by time.
pub fn cmd_metrics(traj: &Trajectory, reference: Option<&Trajectory>, out: &Path) -> Result<SeriesReport> {
    let report = match reference {
        None => SeriesReport::evaluate(traj.times(), traj.fields(), None)?,
        Some(r) => {
            let fields = r
                .times()
                .par_iter()
                .map(|&t| {
                    let k = traj
                        .index_of_time(t)
                        .ok_or_else(|| Error::TimeMismatch(format!("no snapshot at reference time {t}")))?;
                    to_grid(traj.field(k), r.grid())
                })
                .collect::<Result<Vec<_>>>()?;
            SeriesReport::evaluate(r.times(), &fields, Some(r.fields()))?
        }
    };
    report.write(out)?;
    let mut t = CsvTable::new(CSV_CONVENTION, &["mean_rel_l2", "mass_drift", "overshoot", "undershoot"]);
    let mean = report.mean_rel_l2().map(fmt).unwrap_or_default();
    t.push(vec![mean, fmt(mass_drift(traj)), fmt(report.overshoot()), fmt(report.undershoot())]);
    t.write(&out.join("summary.csv"))?;
    atomic_write(&out.join("VERSION"), format!("{VERSION}\n").as_bytes())?;
    Ok(report)
}

/// LF and HF FOM runs followed by multi-fidelity correction, all at `fom.R`.
/// Trajectories go to `lf_run/` and `hf_run/`, the correction to `mf/`.
pub fn cmd_demo(cfg: &ExperimentConfig, opts: &RunOptions, out: &Path) -> Result<CorrectionOutcome> {
    let (lf_n, hf_n) = (cfg.mf_lf_res, cfg.mf_hf_res);
    let (lf, hf) = rayon::join(
        || run_fom(&cfg.fom_run(lf_n, cfg.fom_radius, hf_n, Fidelity::Low)),
        || run_fom(&cfg.fom_run(hf_n, cfg.fom_radius, hf_n, Fidelity::High)),
    );
    let (lf, hf) = (lf?, hf?);
    info!("LF mass drift {:e}, HF mass drift {:e}", mass_drift(&lf), mass_drift(&hf));
    write_trajectory(&out.join("lf_run"), &lf)?;
    write_trajectory(&out.join("hf_run"), &hf)?;
    let outcome = cmd_mf(cfg, &lf, &hf, opts, &out.join("mf"))?;
    write_provenance(out, cfg)?;
    Ok(outcome)
}
