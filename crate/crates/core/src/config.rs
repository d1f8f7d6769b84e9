//! Experiment configuration as flat `key = value` text.
//!
//! Every tunable has a namespaced key and a default. Unknown keys are errors,
//! and [`ExperimentConfig::to_text`] renders the fully resolved configuration
//! that is stored next to every output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::displacement::{InterpConfig, Splat};
use crate::error::{Error, Result};
use crate::field::{Fidelity, Grid2D};
use crate::fom::{AcParams, FomRun, RiderKotheParams};
use crate::io::parse_key_values;
use crate::ot::{Epsilon, SinkhornConfig};
use crate::parametric::PmfStrategy;

/// Default `ot.epsilon_diag_fraction` for experiments.
pub const EXPERIMENT_DIAG_FRACTION: f64 = 3e-4;

/// Default `ot.residual_epsilon_diag_fraction`. Residual parts carry
/// near-zero noise across the whole grid, and Sinkhorn stalls on them at
/// the smaller phase-field value.
pub const RESIDUAL_DIAG_FRACTION: f64 = 1e-3;

/// Regularization choice as written in the config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonSetting {
    /// `ot.epsilon_diag_fraction` times the squared domain diagonal.
    Diagonal,
    /// `ot.epsilon_sigma` times the squared cell size.
    Auto,
    Absolute(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub fom_grid: usize,
    pub fom_period: f64,
    pub fom_radius: f64,
    pub fom_center: (f64, f64),
    pub fom_c_eps: f64,
    pub fom_c_gamma: f64,
    pub fom_cfl: f64,
    pub fom_delta_n: f64,
    pub fom_t_end: f64,
    pub fom_dt_output: f64,
    /// Grid size whose spacing sets the interface thickness; 0 means `fom_grid`.
    pub fom_eps_ref_grid: usize,
    pub ot_epsilon: EpsilonSetting,
    pub ot_epsilon_sigma: f64,
    pub ot_epsilon_diag_fraction: f64,
    pub ot_residual_epsilon_diag_fraction: f64,
    pub ot_tol_marginal: f64,
    pub ot_max_iter: usize,
    pub ot_log_domain: bool,
    pub ot_annealing: bool,
    pub ot_support_threshold: f64,
    pub ot_residual_support_threshold: f64,
    pub ot_tau_pi: f64,
    pub ot_splat: Splat,
    pub rom_n_c: usize,
    pub rom_energy_tol: f64,
    pub rom_pod_center: bool,
    pub mf_lf_res: usize,
    pub mf_hf_res: usize,
    pub pmf_param_list: Vec<f64>,
    pub pmf_mu_star: f64,
    pub pmf_strategy: PmfStrategy,
    pub io_out_dir: PathBuf,
    pub io_cache_dir: Option<PathBuf>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let rk = RiderKotheParams::default();
        let ac = AcParams::default();
        let interp = InterpConfig::default();
        ExperimentConfig {
            fom_grid: 64,
            fom_period: rk.period,
            fom_radius: rk.radius,
            fom_center: rk.center,
            fom_c_eps: ac.c_eps,
            fom_c_gamma: ac.c_gamma,
            fom_cfl: ac.cfl,
            fom_delta_n: ac.delta_n,
            fom_t_end: rk.period,
            fom_dt_output: 0.01,
            fom_eps_ref_grid: 0,
            ot_epsilon: EpsilonSetting::Diagonal,
            ot_epsilon_sigma: 8.0,
            // The solver default of 1e-3 blurs interfaces enough that
            // interpolated fields overshoot 1 between checkpoints.
            ot_epsilon_diag_fraction: EXPERIMENT_DIAG_FRACTION,
            ot_residual_epsilon_diag_fraction: RESIDUAL_DIAG_FRACTION,
            ot_tol_marginal: interp.sinkhorn.tol_marginal,
            ot_max_iter: interp.sinkhorn.max_iter,
            ot_log_domain: interp.sinkhorn.log_domain,
            ot_annealing: interp.sinkhorn.annealing,
            ot_support_threshold: interp.sinkhorn.support_threshold,
            ot_residual_support_threshold: interp.residual_support_threshold,
            ot_tau_pi: interp.tau_pi,
            ot_splat: interp.splat,
            rom_n_c: 41,
            rom_energy_tol: 1e-6,
            rom_pod_center: false,
            mf_lf_res: 32,
            mf_hf_res: 64,
            pmf_param_list: vec![0.1, 0.105, 0.115, 0.12],
            pmf_mu_star: 0.11,
            pmf_strategy: PmfStrategy::HfFirst,
            io_out_dir: PathBuf::from("out"),
            io_cache_dir: None,
            seed: 0,
        }
    }
}

fn invalid(key: &str, value: &str, why: &str) -> Error {
    Error::InvalidArgument(format!("{key} = {value}: {why}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| invalid(key, value, "not a valid number"))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(invalid(key, value, "expected true or false")),
    }
}

fn list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').filter(|s| !s.trim().is_empty()).map(|s| num(key, s)).collect()
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    /// Defaults overridden by the keys of a config file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg = ExperimentConfig::default();
        for (k, v) in parse_key_values(&text, path)? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    /// Applies one `key = value` override; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "fom.grid" => self.fom_grid = num(key, v)?,
            "fom.T" => self.fom_period = num(key, v)?,
            "fom.R" => self.fom_radius = num(key, v)?,
            "fom.center" => {
                let c = list(key, v)?;
                if c.len() != 2 {
                    return Err(invalid(key, v, "expected two comma-separated coordinates"));
                }
                self.fom_center = (c[0], c[1]);
            }
            "fom.c_eps" => self.fom_c_eps = num(key, v)?,
            "fom.c_gamma" => self.fom_c_gamma = num(key, v)?,
            "fom.cfl" => self.fom_cfl = num(key, v)?,
            "fom.delta_n" => self.fom_delta_n = num(key, v)?,
            "fom.t_end" => self.fom_t_end = num(key, v)?,
            "fom.dt_output" => self.fom_dt_output = num(key, v)?,
            "fom.eps_ref_grid" => self.fom_eps_ref_grid = num(key, v)?,
            "ot.epsilon" => {
                self.ot_epsilon = match v {
                    "diag" => EpsilonSetting::Diagonal,
                    "auto" => EpsilonSetting::Auto,
                    other => EpsilonSetting::Absolute(num(key, other)?),
                }
            }
            "ot.epsilon_sigma" => self.ot_epsilon_sigma = num(key, v)?,
            "ot.epsilon_diag_fraction" => self.ot_epsilon_diag_fraction = num(key, v)?,
            "ot.residual_epsilon_diag_fraction" => self.ot_residual_epsilon_diag_fraction = num(key, v)?,
            "ot.tol_marginal" => self.ot_tol_marginal = num(key, v)?,
            "ot.max_iter" => self.ot_max_iter = num(key, v)?,
            "ot.log_domain" => self.ot_log_domain = boolean(key, v)?,
            "ot.annealing" => self.ot_annealing = boolean(key, v)?,
            "ot.support_threshold" => self.ot_support_threshold = num(key, v)?,
            "ot.residual_support_threshold" => self.ot_residual_support_threshold = num(key, v)?,
            "ot.tau_pi" => self.ot_tau_pi = num(key, v)?,
            "ot.splat" => self.ot_splat = v.parse()?,
            "rom.n_c" => self.rom_n_c = num(key, v)?,
            "rom.energy_tol" => self.rom_energy_tol = num(key, v)?,
            "rom.pod_center" => self.rom_pod_center = boolean(key, v)?,
            "mf.lf_res" => self.mf_lf_res = num(key, v)?,
            "mf.hf_res" => self.mf_hf_res = num(key, v)?,
            "pmf.param_list" => self.pmf_param_list = list(key, v)?,
            "pmf.mu_star" => self.pmf_mu_star = num(key, v)?,
            "pmf.strategy" => self.pmf_strategy = v.parse()?,
            "io.out_dir" => self.io_out_dir = PathBuf::from(v),
            "io.cache_dir" => self.io_cache_dir = (!v.is_empty()).then(|| PathBuf::from(v)),
            "seed" => self.seed = num(key, v)?,
            other => return Err(Error::InvalidArgument(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies a `key=value` override string.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("override `{pair}` is not key=value")))?;
        self.set(k, v)
    }

    pub fn validate(&self) -> Result<()> {
        self.rk().validate()?;
        self.ac().validate()?;
        self.interp().validate()?;
        for (what, n) in [("fom.grid", self.fom_grid), ("mf.lf_res", self.mf_lf_res), ("mf.hf_res", self.mf_hf_res)] {
            if n < 2 {
                return Err(Error::InvalidArgument(format!("{what} must be at least 2")));
            }
        }
        if self.mf_hf_res % self.mf_lf_res != 0 || !matches!(self.mf_hf_res / self.mf_lf_res, 1 | 2 | 4) {
            return Err(Error::InvalidArgument("mf.hf_res must be 1, 2 or 4 times mf.lf_res".into()));
        }
        if !(self.fom_t_end > 0.0 && self.fom_dt_output > 0.0 && self.fom_dt_output <= self.fom_t_end) {
            return Err(Error::InvalidArgument("need 0 < fom.dt_output <= fom.t_end".into()));
        }
        if self.rom_n_c < 2 {
            return Err(Error::InvalidArgument("rom.n_c must be at least 2".into()));
        }
        if !(self.rom_energy_tol > 0.0 && self.rom_energy_tol < 1.0) {
            return Err(Error::OutOfRange {
                what: "rom.energy_tol",
                value: self.rom_energy_tol,
                lo: 0.0,
                hi: 1.0,
            });
        }
        if self.pmf_param_list.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("pmf.param_list must increase strictly".into()));
        }
        Ok(())
    }

    pub fn rk(&self) -> RiderKotheParams {
        RiderKotheParams {
            period: self.fom_period,
            radius: self.fom_radius,
            center: self.fom_center,
        }
    }

    pub fn ac(&self) -> AcParams {
        AcParams {
            c_eps: self.fom_c_eps,
            c_gamma: self.fom_c_gamma,
            cfl: self.fom_cfl,
            delta_n: self.fom_delta_n,
        }
    }

    pub fn epsilon(&self) -> Epsilon {
        match self.ot_epsilon {
            EpsilonSetting::Diagonal => Epsilon::DiagonalFraction(self.ot_epsilon_diag_fraction),
            EpsilonSetting::Auto => Epsilon::Auto {
                sigma: self.ot_epsilon_sigma,
            },
            EpsilonSetting::Absolute(e) => Epsilon::Absolute(e),
        }
    }

    pub fn interp(&self) -> InterpConfig {
        InterpConfig {
            sinkhorn: SinkhornConfig {
                epsilon: self.epsilon(),
                tol_marginal: self.ot_tol_marginal,
                max_iter: self.ot_max_iter,
                log_domain: self.ot_log_domain,
                support_threshold: self.ot_support_threshold,
                annealing: self.ot_annealing,
                ..SinkhornConfig::default()
            },
            tau_pi: self.ot_tau_pi,
            splat: self.ot_splat,
            residual_support_threshold: self.ot_residual_support_threshold,
            residual_epsilon: Epsilon::DiagonalFraction(self.ot_residual_epsilon_diag_fraction),
        }
    }

    /// FOM run on an `n × n` unit-square grid at radius `radius`. The interface
    /// thickness uses the spacing of `eps_ref_n`, so paired LF/HF runs share it.
    pub fn fom_run(&self, n: usize, radius: f64, eps_ref_n: usize, label: Fidelity) -> FomRun {
        let mut run = FomRun::new(
            Grid2D::unit_square(n),
            RiderKotheParams { radius, ..self.rk() },
            self.ac(),
            self.fom_t_end,
            self.fom_dt_output,
        );
        run.eps_ref_h = 1.0 / eps_ref_n as f64;
        run.label = label;
        run
    }

    /// The single-run FOM described by the `fom.*` keys.
    pub fn fom_single(&self) -> FomRun {
        let eps_ref = if self.fom_eps_ref_grid == 0 { self.fom_grid } else { self.fom_eps_ref_grid };
        let label = if eps_ref > self.fom_grid { Fidelity::Low } else { Fidelity::High };
        self.fom_run(self.fom_grid, self.fom_radius, eps_ref, label)
    }

    /// Fully resolved configuration, one key per line in a fixed order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("fom.grid", self.fom_grid.to_string());
        line("fom.T", self.fom_period.to_string());
        line("fom.R", self.fom_radius.to_string());
        line("fom.center", format!("{}, {}", self.fom_center.0, self.fom_center.1));
        line("fom.c_eps", self.fom_c_eps.to_string());
        line("fom.c_gamma", self.fom_c_gamma.to_string());
        line("fom.cfl", self.fom_cfl.to_string());
        line("fom.delta_n", self.fom_delta_n.to_string());
        line("fom.t_end", self.fom_t_end.to_string());
        line("fom.dt_output", self.fom_dt_output.to_string());
        line("fom.eps_ref_grid", self.fom_eps_ref_grid.to_string());
        line(
            "ot.epsilon",
            match self.ot_epsilon {
                EpsilonSetting::Diagonal => "diag".into(),
                EpsilonSetting::Auto => "auto".into(),
                EpsilonSetting::Absolute(e) => e.to_string(),
            },
        );
        line("ot.epsilon_sigma", self.ot_epsilon_sigma.to_string());
        line("ot.epsilon_diag_fraction", self.ot_epsilon_diag_fraction.to_string());
        line(
            "ot.residual_epsilon_diag_fraction",
            self.ot_residual_epsilon_diag_fraction.to_string(),
        );
        line("ot.tol_marginal", self.ot_tol_marginal.to_string());
        line("ot.max_iter", self.ot_max_iter.to_string());
        line("ot.log_domain", self.ot_log_domain.to_string());
        line("ot.annealing", self.ot_annealing.to_string());
        line("ot.support_threshold", self.ot_support_threshold.to_string());
        line("ot.residual_support_threshold", self.ot_residual_support_threshold.to_string());
        line("ot.tau_pi", self.ot_tau_pi.to_string());
        line("ot.splat", self.ot_splat.to_string());
        line("rom.n_c", self.rom_n_c.to_string());
        line("rom.energy_tol", self.rom_energy_tol.to_string());
        line("rom.pod_center", self.rom_pod_center.to_string());
        line("mf.lf_res", self.mf_lf_res.to_string());
        line("mf.hf_res", self.mf_hf_res.to_string());
        line("pmf.param_list", join(&self.pmf_param_list));
        line("pmf.mu_star", self.pmf_mu_star.to_string());
        line("pmf.strategy", self.pmf_strategy.to_string());
        line("io.out_dir", format!("\"{}\"", self.io_out_dir.display()));
        line(
            "io.cache_dir",
            format!("\"{}\"", self.io_cache_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
        );
        line("seed", self.seed.to_string());
        s
    }
}
