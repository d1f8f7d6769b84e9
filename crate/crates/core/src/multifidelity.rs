//! Multi-fidelity correction of a low-fidelity trajectory.
//!
//! Residuals `r_k = u_HF(t_k) − P u_LF(t_k)` (with `P` the prolongation onto
//! the HF grid) are computed at checkpoints, interpolated in time by signed
//! displacement interpolation, and added back to the prolonged LF solution.

use rayon::prelude::*;

use crate::displacement::{OtContext, SignedSegment};
use crate::error::{Error, Result};
use crate::field::{to_grid, Grid2D, ScalarField, Trajectory};
use crate::rom_di::bracket_time;

/// LF snapshot at time `t`, prolonged onto `grid`.
pub fn lf_on_grid(lf: &Trajectory, t: f64, grid: &Grid2D) -> Result<ScalarField> {
    let k = lf.index_of_time(t).ok_or(Error::MissingLfSnapshot(t))?;
    to_grid(lf.field(k), grid)
}

/// `u_HF(t_k) − P u_LF(t_k)` on the HF grid, with `t_k` the time of HF snapshot `k`.
pub fn residual_at(hf: &Trajectory, lf: &Trajectory, k: usize) -> Result<ScalarField> {
    let t = hf.times()[k];
    let j = lf
        .index_of_time(t)
        .ok_or_else(|| Error::TimeMismatch(format!("no LF snapshot at HF time {t}")))?;
    hf.field(k).sub(&to_grid(lf.field(j), hf.grid())?)
}

/// Signed residual interpolated in time between checkpoints.
#[derive(Debug, Clone)]
pub struct ResidualRom {
    pub grid: Grid2D,
    pub times: Vec<f64>,
    /// One signed segment per consecutive checkpoint pair.
    pub segments: Vec<SignedSegment>,
}

impl ResidualRom {
    /// Couples consecutive residual checkpoints, polarity by polarity.
    pub fn from_residuals(times: &[f64], residuals: &[ScalarField], ctx: &OtContext) -> Result<ResidualRom> {
        if times.len() != residuals.len() || times.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "{} checkpoint times for {} residuals (need at least two)",
                times.len(),
                residuals.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("checkpoint times must increase".into()));
        }
        let grid = *residuals[0].grid();
        let thr = ctx.cfg.residual_support_threshold;
        let segments = (0..times.len() - 1)
            .into_par_iter()
            .map(|k| SignedSegment::build(&residuals[k], &residuals[k + 1], ctx, thr, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(ResidualRom {
            grid,
            times: times.to_vec(),
            segments,
        })
    }

    /// Residual checkpoints between `hf` and `lf` at the given HF snapshot indices.
    pub fn build(hf: &Trajectory, lf: &Trajectory, indices: &[usize], ctx: &OtContext) -> Result<ResidualRom> {
        lf.grid().refinement_to(hf.grid())?;
        let residuals = indices
            .par_iter()
            .map(|&k| residual_at(hf, lf, k))
            .collect::<Result<Vec<_>>>()?;
        let times: Vec<f64> = indices.iter().map(|&k| hf.times()[k]).collect();
        ResidualRom::from_residuals(&times, &residuals, ctx)
    }

    /// Interpolated residual at time `t`.
    pub fn residual(&self, t: f64) -> Result<ScalarField> {
        let (k, alpha) = bracket_time(&self.times, t)?;
        self.segments[k].eval(alpha, &self.grid)
    }

    /// `P u_LF(t) + r(t)` on the HF grid. Values are not clamped.
    pub fn correct(&self, lf: &Trajectory, t: f64) -> Result<ScalarField> {
        let (k, alpha) = bracket_time(&self.times, t)?;
        let base = lf_on_grid(lf, t, &self.grid)?;
        base.add(&self.segments[k].eval(alpha, &self.grid)?)
    }
}

/// Corrected LF field at time `t`.
pub fn mf_correct(rom: &ResidualRom, lf: &Trajectory, t: f64) -> Result<ScalarField> {
    rom.correct(lf, t)
}
