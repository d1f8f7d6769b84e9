//! Displacement (McCann) interpolation through an entropic transport plan.
//!
//! Each plan entry `π_ij` carries its mass along the straight segment from
//! `x_i` to `y_j`; at virtual time `α` the mass sits at `(1 − α) x_i + α y_j`
//! and is deposited onto the output grid. Masses are interpolated linearly,
//! so the result has mass `(1 − α) m0 + α m1`.
//!
//! Signed fields are handled by splitting into positive and negative parts and
//! interpolating each part on its own.

use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{mass, normalize, Grid2D, ScalarField};
use crate::io::PlanCache;
use crate::ot::{sinkhorn, to_measure, DiscreteMeasure, Epsilon, SinkhornConfig, TransportPlan};

/// Rows of the plan handled by one accumulation buffer.
const ROW_BLOCK: usize = 64;

/// How a transported point mass is deposited onto the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Splat {
    /// Whole mass into the cell whose center is closest.
    Nearest,
    /// Mass shared among the four surrounding cell centers.
    #[default]
    Bilinear,
}

impl FromStr for Splat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Splat::Nearest),
            "bilinear" => Ok(Splat::Bilinear),
            other => Err(Error::InvalidArgument(format!("unknown splat mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for Splat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Splat::Nearest => "nearest",
            Splat::Bilinear => "bilinear",
        })
    }
}

/// Everything needed to couple two fields and push mass along the coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpConfig {
    pub sinkhorn: SinkhornConfig,
    /// Relative row-mass cutoff for plan entries during the pushforward.
    pub tau_pi: f64,
    pub splat: Splat,
    /// Support cutoff applied to residual parts instead of `sinkhorn.support_threshold`.
    pub residual_support_threshold: f64,
    /// Regularization used for residual parts instead of `sinkhorn.epsilon`.
    pub residual_epsilon: Epsilon,
}

impl Default for InterpConfig {
    fn default() -> Self {
        InterpConfig {
            sinkhorn: SinkhornConfig::default(),
            tau_pi: 1e-6,
            splat: Splat::Bilinear,
            residual_support_threshold: 1e-10,
            residual_epsilon: Epsilon::default(),
        }
    }
}

impl InterpConfig {
    pub fn validate(&self) -> Result<()> {
        self.sinkhorn.validate()?;
        if !(0.0..1.0).contains(&self.tau_pi) {
            return Err(Error::InvalidArgument(format!("tau_pi = {} must lie in [0, 1)", self.tau_pi)));
        }
        if !(0.0..1.0).contains(&self.residual_support_threshold) {
            return Err(Error::InvalidArgument("residual support threshold must lie in [0, 1)".into()));
        }
        SinkhornConfig {
            epsilon: self.residual_epsilon,
            ..self.sinkhorn.clone()
        }
        .validate()
    }
}

/// Plan provider with an optional on-disk cache.
#[derive(Debug, Clone)]
pub struct OtContext {
    pub cfg: InterpConfig,
    pub cache: Option<PlanCache>,
}

impl OtContext {
    pub fn new(cfg: InterpConfig) -> Self {
        OtContext { cfg, cache: None }
    }

    pub fn with_cache(cfg: InterpConfig, cache: PlanCache) -> Self {
        OtContext { cfg, cache: Some(cache) }
    }

    /// The same provider with the residual regularization in place of the phase-field one.
    pub fn for_residuals(&self) -> OtContext {
        let mut cfg = self.cfg.clone();
        cfg.sinkhorn.epsilon = cfg.residual_epsilon;
        OtContext { cfg, cache: self.cache.clone() }
    }

    /// Solves (or loads) the entropic plan between two measures.
    pub fn plan(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Arc<TransportPlan>> {
        let Some(cache) = &self.cache else {
            return Ok(Arc::new(sinkhorn(mu, nu, &self.cfg.sinkhorn)?));
        };
        let key = PlanCache::key(mu, nu, &self.cfg.sinkhorn);
        if let Some(plan) = cache.load(&key, mu, nu) {
            return Ok(Arc::new(plan));
        }
        let plan = sinkhorn(mu, nu, &self.cfg.sinkhorn)?;
        if let Err(e) = cache.store(&key, &plan) {
            log::warn!("could not write plan cache entry {key}: {e}");
        }
        Ok(Arc::new(plan))
    }
}

/// Plan between two normalized fields plus their original masses.
#[derive(Debug, Clone)]
pub struct DiPair {
    pub plan: Arc<TransportPlan>,
    pub m0: f64,
    pub m1: f64,
    pub splat: Splat,
    pub tau_pi: f64,
}

impl DiPair {
    /// Normalizes both fields, restricts them to their supports and couples them.
    pub fn build(f0: &ScalarField, f1: &ScalarField, ctx: &OtContext, support_threshold: f64) -> Result<DiPair> {
        let (n0, m0) = normalize(f0)?;
        let (n1, m1) = normalize(f1)?;
        let mu = to_measure(&n0, support_threshold)?;
        let nu = to_measure(&n1, support_threshold)?;
        Ok(DiPair {
            plan: ctx.plan(&mu, &nu)?,
            m0,
            m1,
            splat: ctx.cfg.splat,
            tau_pi: ctx.cfg.tau_pi,
        })
    }

    pub fn mass_at(&self, alpha: f64) -> f64 {
        (1.0 - alpha) * self.m0 + alpha * self.m1
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::OutOfRange {
            what: "alpha",
            value: alpha,
            lo: 0.0,
            hi: 1.0,
        });
    }
    Ok(())
}

/// Grid deposition geometry: positions are clamped to the hull of cell centers.
struct Splatter {
    grid: Grid2D,
    mode: Splat,
}

impl Splatter {
    #[inline]
    fn deposit(&self, buf: &mut [f64], p: [f64; 2], w: f64) {
        let g = &self.grid;
        let fx = ((p[0] - g.x0) / g.hx - 0.5).clamp(0.0, (g.nx - 1) as f64);
        let fy = ((p[1] - g.y0) / g.hy - 0.5).clamp(0.0, (g.ny - 1) as f64);
        match self.mode {
            Splat::Nearest => {
                let i = fx.round() as usize;
                let j = fy.round() as usize;
                buf[g.index(i, j)] += w;
            }
            Splat::Bilinear => {
                let i0 = (fx.floor() as usize).min(g.nx - 2);
                let j0 = (fy.floor() as usize).min(g.ny - 2);
                let tx = fx - i0 as f64;
                let ty = fy - j0 as f64;
                let k = g.index(i0, j0);
                buf[k] += w * (1.0 - tx) * (1.0 - ty);
                buf[k + 1] += w * tx * (1.0 - ty);
                buf[k + g.nx] += w * (1.0 - tx) * ty;
                buf[k + g.nx + 1] += w * tx * ty;
            }
        }
    }
}

/// Displacement interpolant of a pair at virtual time `alpha` on `grid`.
pub fn displace(pair: &DiPair, alpha: f64, grid: &Grid2D) -> Result<ScalarField> {
    check_alpha(alpha)?;
    let m_alpha = pair.mass_at(alpha);
    if m_alpha <= 0.0 {
        return Ok(ScalarField::zeros(*grid));
    }
    let plan = &*pair.plan;
    let rows = plan.rows();
    let splatter = Splatter {
        grid: *grid,
        mode: pair.splat,
    };
    let src = plan.source.points();
    let tgt = plan.target.points();
    let n = plan.source.len();
    let blocks: Vec<Vec<f64>> = (0..n.div_ceil(ROW_BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![0.0; grid.len()];
            let mut row = Vec::new();
            for i in b * ROW_BLOCK..((b + 1) * ROW_BLOCK).min(n) {
                rows.row_into(i, pair.tau_pi, &mut row);
                let kept: f64 = row.iter().map(|e| e.1).sum();
                if !(kept > 0.0) {
                    continue;
                }
                let scale = rows.row_mass(i) / kept;
                let x = src[i];
                for &(j, w) in &row {
                    let y = tgt[j];
                    let p = [(1.0 - alpha) * x[0] + alpha * y[0], (1.0 - alpha) * x[1] + alpha * y[1]];
                    splatter.deposit(&mut acc, p, w * scale);
                }
            }
            acc
        })
        .collect();
    let mut values = vec![0.0; grid.len()];
    for block in &blocks {
        for (v, b) in values.iter_mut().zip(block) {
            *v += b;
        }
    }
    let total: f64 = values.iter().sum();
    let scale = m_alpha / (total * grid.cell_area());
    values.iter_mut().for_each(|v| *v *= scale);
    Ok(ScalarField::from_parts(*grid, values))
}

/// Positive and negative parts: `r = r⁺ − r⁻` with both parts nonnegative.
pub fn split_signed(r: &ScalarField) -> (ScalarField, ScalarField) {
    (r.map(|v| if v > 0.0 { v } else { 0.0 }), r.map(|v| if v < 0.0 { -v } else { 0.0 }))
}

/// Interpolation rule for one nonnegative part over one time or parameter interval.
#[derive(Debug, Clone)]
pub enum Segment {
    /// Both endpoints carry no mass.
    Zero,
    /// Exactly one endpoint carries mass; its shape is kept and its mass faded.
    Fade { field: ScalarField, m0: f64, m1: f64 },
    Transport(DiPair),
}

impl Segment {
    pub fn build(f0: &ScalarField, f1: &ScalarField, ctx: &OtContext, support_threshold: f64) -> Result<Segment> {
        f0.check_grid(f1)?;
        let floor = f0.grid().mass_floor();
        let (m0, m1) = (mass(f0), mass(f1));
        Ok(match (m0 > floor, m1 > floor) {
            (false, false) => Segment::Zero,
            (true, false) => Segment::Fade {
                field: f0.clone(),
                m0,
                m1: 0.0,
            },
            (false, true) => Segment::Fade {
                field: f1.clone(),
                m0: 0.0,
                m1,
            },
            (true, true) => Segment::Transport(DiPair::build(f0, f1, ctx, support_threshold)?),
        })
    }

    pub fn eval(&self, alpha: f64, grid: &Grid2D) -> Result<ScalarField> {
        check_alpha(alpha)?;
        match self {
            Segment::Zero => Ok(ScalarField::zeros(*grid)),
            Segment::Fade { field, m0, m1 } => {
                let m_alpha = (1.0 - alpha) * m0 + alpha * m1;
                let m_full = m0.max(*m1);
                let faded = field.scaled(m_alpha / m_full);
                crate::field::to_grid(&faded, grid)
            }
            Segment::Transport(pair) => displace(pair, alpha, grid),
        }
    }

    pub fn pair(&self) -> Option<&DiPair> {
        match self {
            Segment::Transport(p) => Some(p),
            _ => None,
        }
    }
}

/// Interpolation of a signed field via its two polarities.
#[derive(Debug, Clone)]
pub struct SignedSegment {
    pub pos: Segment,
    pub neg: Segment,
}

impl SignedSegment {
    /// Errors are tagged with `pair` and the polarity they came from.
    pub fn build(
        r0: &ScalarField,
        r1: &ScalarField,
        ctx: &OtContext,
        support_threshold: f64,
        pair: usize,
    ) -> Result<SignedSegment> {
        let (p0, n0) = split_signed(r0);
        let (p1, n1) = split_signed(r1);
        let ctx = &ctx.for_residuals();
        let (pos, neg) = rayon::join(
            || Segment::build(&p0, &p1, ctx, support_threshold).map_err(|e| e.in_pair(pair, " (positive part)")),
            || Segment::build(&n0, &n1, ctx, support_threshold).map_err(|e| e.in_pair(pair, " (negative part)")),
        );
        Ok(SignedSegment { pos: pos?, neg: neg? })
    }

    pub fn eval(&self, alpha: f64, grid: &Grid2D) -> Result<ScalarField> {
        let (p, n) = rayon::join(|| self.pos.eval(alpha, grid), || self.neg.eval(alpha, grid));
        p?.sub(&n?)
    }
}

/// Signed displacement interpolation between two residual-like fields.
pub fn displace_signed(r0: &ScalarField, r1: &ScalarField, alpha: f64, ctx: &OtContext) -> Result<ScalarField> {
    check_alpha(alpha)?;
    let seg = SignedSegment::build(r0, r1, ctx, ctx.cfg.residual_support_threshold, 0)?;
    seg.eval(alpha, r0.grid())
}
