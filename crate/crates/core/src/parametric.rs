//! Parametric multi-fidelity correction at an unseen parameter value.
//!
//! The parameter is bracketed by two training values `μ_j ≤ μ* ≤ μ_{j+1}` and
//! a virtual parameter `α_μ = (μ* − μ_j) / (μ_{j+1} − μ_j)`. Synthetic HF
//! checkpoints (or residuals) at `μ*` are obtained by displacement
//! interpolation across the bracket, then corrected in time against a true LF
//! run at `μ*`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::displacement::{displace, DiPair, OtContext, SignedSegment};
use crate::error::{Error, Result};
use crate::field::{ScalarField, Trajectory};
use crate::multifidelity::{lf_on_grid, residual_at, ResidualRom};

/// Slack when comparing parameter values.
const PARAM_TOL: f64 = 1e-12;

/// `(j, α_μ)` with left-closed brackets `[μ_j, μ_{j+1})`; the last parameter maps to `(N − 2, 1)`.
pub fn bracket_param(params: &[f64], mu: f64) -> Result<(usize, f64)> {
    if params.len() < 2 {
        return Err(Error::InvalidArgument("need at least two training parameters".into()));
    }
    let (lo, hi) = (params[0], params[params.len() - 1]);
    if mu < lo - PARAM_TOL || mu > hi + PARAM_TOL {
        return Err(Error::OutOfRange {
            what: "parameter",
            value: mu,
            lo,
            hi,
        });
    }
    let j = params
        .partition_point(|&p| p <= mu + PARAM_TOL)
        .saturating_sub(1)
        .min(params.len() - 2);
    let alpha = ((mu - params[j]) / (params[j + 1] - params[j])).clamp(0.0, 1.0);
    let alpha = if alpha <= PARAM_TOL {
        0.0
    } else if alpha >= 1.0 - PARAM_TOL {
        1.0
    } else {
        alpha
    };
    Ok((j, alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PmfStrategy {
    /// Interpolate HF checkpoints across parameters, then form residuals.
    #[default]
    HfFirst,
    /// Form residuals at the training parameters, then interpolate them across parameters.
    ResidualFirst,
}

impl FromStr for PmfStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hf_first" => Ok(PmfStrategy::HfFirst),
            "residual_first" => Ok(PmfStrategy::ResidualFirst),
            other => Err(Error::InvalidArgument(format!("unknown strategy '{other}'"))),
        }
    }
}

impl fmt::Display for PmfStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PmfStrategy::HfFirst => "hf_first",
            PmfStrategy::ResidualFirst => "residual_first",
        })
    }
}

/// HF runs (and optionally LF runs) at increasing training parameters.
#[derive(Debug, Clone)]
pub struct ParametricDataset {
    params: Vec<f64>,
    hf: Vec<Trajectory>,
    lf: Vec<Option<Trajectory>>,
}

impl ParametricDataset {
    pub fn new(params: Vec<f64>, hf: Vec<Trajectory>, lf: Vec<Option<Trajectory>>) -> Result<Self> {
        if params.len() != hf.len() || params.len() != lf.len() {
            return Err(Error::InvalidArgument("one HF run and one LF slot per parameter are required".into()));
        }
        if params.len() < 2 {
            return Err(Error::InvalidArgument("need at least two training parameters".into()));
        }
        if params.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("training parameters must increase strictly".into()));
        }
        let (g, times) = (hf[0].grid(), hf[0].times());
        for t in &hf[1..] {
            if t.grid() != g {
                return Err(Error::GridMismatch(format!("HF runs on {} and {g}", t.grid())));
            }
            if t.times() != times {
                return Err(Error::TimeMismatch("HF runs have different output times".into()));
            }
        }
        Ok(ParametricDataset { params, hf, lf })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn hf(&self, j: usize) -> &Trajectory {
        &self.hf[j]
    }

    pub fn lf(&self, j: usize) -> Option<&Trajectory> {
        self.lf[j].as_ref()
    }

    /// True when `mu` equals one of the training parameters.
    pub fn contains(&self, mu: f64) -> bool {
        self.params.iter().any(|p| (p - mu).abs() <= PARAM_TOL)
    }

    /// Dataset restricted to the given parameter indices.
    pub fn subset(&self, keep: &[usize]) -> Result<Self> {
        ParametricDataset::new(
            keep.iter().map(|&j| self.params[j]).collect(),
            keep.iter().map(|&j| self.hf[j].clone()).collect(),
            keep.iter().map(|&j| self.lf[j].clone()).collect(),
        )
    }
}

/// Synthetic HF checkpoints `(t_k, u)` at `mu_star` by displacement
/// interpolation between the bracketing HF runs.
pub fn synthesize_hf_checkpoints(
    ds: &ParametricDataset,
    mu_star: f64,
    indices: &[usize],
    ctx: &OtContext,
) -> Result<Vec<(f64, ScalarField)>> {
    let (j, alpha) = bracket_param(&ds.params, mu_star)?;
    let (a, b) = (&ds.hf[j], &ds.hf[j + 1]);
    let grid = *a.grid();
    let thr = ctx.cfg.sinkhorn.support_threshold;
    indices
        .par_iter()
        .map(|&k| {
            let t = a.times()[k];
            let field = if alpha == 0.0 {
                a.field(k).clone()
            } else if alpha == 1.0 {
                b.field(k).clone()
            } else {
                let pair = DiPair::build(a.field(k), b.field(k), ctx, thr).map_err(|e| e.at_time(t))?;
                displace(&pair, alpha, &grid).map_err(|e| e.at_time(t))?
            };
            Ok((t, field))
        })
        .collect()
}

/// Synthetic residual checkpoints at `mu_star` from residuals at the bracketing parameters.
fn synthesize_residuals(ds: &ParametricDataset, mu_star: f64, indices: &[usize], ctx: &OtContext) -> Result<Vec<ScalarField>> {
    let (j, alpha) = bracket_param(&ds.params, mu_star)?;
    let (Some(lf_a), Some(lf_b)) = (&ds.lf[j], &ds.lf[j + 1]) else {
        return Err(Error::MissingLfNeighbors {
            lo: ds.params[j],
            hi: ds.params[j + 1],
        });
    };
    let grid = *ds.hf[j].grid();
    let thr = ctx.cfg.residual_support_threshold;
    indices
        .par_iter()
        .map(|&k| {
            let t = ds.hf[j].times()[k];
            let ra = residual_at(&ds.hf[j], lf_a, k)?;
            let rb = residual_at(&ds.hf[j + 1], lf_b, k)?;
            if alpha == 0.0 {
                return Ok(ra);
            }
            if alpha == 1.0 {
                return Ok(rb);
            }
            SignedSegment::build(&ra, &rb, ctx, thr, k)
                .and_then(|s| s.eval(alpha, &grid))
                .map_err(|e| e.at_time(t))
        })
        .collect()
}

/// Offline state of the parametric correction at one unseen parameter.
#[derive(Debug, Clone)]
pub struct PmfRom {
    pub mu_star: f64,
    pub strategy: PmfStrategy,
    /// Synthetic HF checkpoints (HF-first only).
    pub synthetic_hf: Vec<(f64, ScalarField)>,
    pub residual: ResidualRom,
}

impl PmfRom {
    /// Builds the temporal residual model at `mu_star` against the true LF run `lf_star`.
    pub fn build(
        ds: &ParametricDataset,
        mu_star: f64,
        lf_star: &Trajectory,
        indices: &[usize],
        strategy: PmfStrategy,
        ctx: &OtContext,
    ) -> Result<PmfRom> {
        let hf_grid = *ds.hf[0].grid();
        lf_star.grid().refinement_to(&hf_grid)?;
        let times: Vec<f64> = indices.iter().map(|&k| ds.hf[0].times()[k]).collect();
        let (synthetic_hf, residuals) = match strategy {
            PmfStrategy::HfFirst => {
                let synth = synthesize_hf_checkpoints(ds, mu_star, indices, ctx)?;
                let residuals = synth
                    .par_iter()
                    .map(|(t, u)| {
                        let j = lf_star
                            .index_of_time(*t)
                            .ok_or_else(|| Error::TimeMismatch(format!("no LF snapshot at checkpoint time {t}")))?;
                        u.sub(&crate::field::to_grid(lf_star.field(j), &hf_grid)?)
                    })
                    .collect::<Result<Vec<_>>>()?;
                (synth, residuals)
            }
            PmfStrategy::ResidualFirst => (Vec::new(), synthesize_residuals(ds, mu_star, indices, ctx)?),
        };
        Ok(PmfRom {
            mu_star,
            strategy,
            synthetic_hf,
            residual: ResidualRom::from_residuals(&times, &residuals, ctx)?,
        })
    }

    /// `P u_LF(t; μ*) + r(t; μ*)` on the HF grid.
    pub fn correct(&self, lf_star: &Trajectory, t: f64) -> Result<ScalarField> {
        self.residual.correct(lf_star, t)
    }

    /// Prolonged LF field without correction, for comparison.
    pub fn uncorrected(&self, lf_star: &Trajectory, t: f64) -> Result<ScalarField> {
        lf_on_grid(lf_star, t, &self.residual.grid)
    }
}

/// One-shot HF-first parametric correction at `t_star`.
pub fn pmf_correct(
    ds: &ParametricDataset,
    mu_star: f64,
    lf_star: &Trajectory,
    indices: &[usize],
    t_star: f64,
    ctx: &OtContext,
) -> Result<ScalarField> {
    PmfRom::build(ds, mu_star, lf_star, indices, PmfStrategy::HfFirst, ctx)?.correct(lf_star, t_star)
}

/// One-shot residual-first parametric correction at `t_star`.
pub fn pmf_correct_residual_first(
    ds: &ParametricDataset,
    mu_star: f64,
    lf_star: &Trajectory,
    indices: &[usize],
    t_star: f64,
    ctx: &OtContext,
) -> Result<ScalarField> {
    PmfRom::build(ds, mu_star, lf_star, indices, PmfStrategy::ResidualFirst, ctx)?.correct(lf_star, t_star)
}
