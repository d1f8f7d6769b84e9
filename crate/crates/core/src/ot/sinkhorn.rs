use std::sync::Arc;

use rayon::prelude::*;

use super::kernel::{sq_dist, GibbsKernel, KernelPath};
use super::measure::{to_measure, DiscreteMeasure};
use crate::error::{Error, Result};
use crate::field::{Grid2D, ScalarField};

/// Residual checks happen every this many iterations.
const CHECK_EVERY: usize = 10;
/// Marginal tolerance of intermediate annealing stages.
const STAGE_TOL: f64 = 1e-4;
/// Iteration cap of intermediate annealing stages.
const STAGE_MAX_ITER: usize = 300;
/// Window over which the contraction rate is measured for over-relaxation.
const RELAX_WINDOW: usize = 100;
/// Residual growth over one window that counts as divergence. Relaxed
/// iterates are not monotone in the L1 residual, so smaller bumps are ignored.
const RELAX_GROWTH: f64 = 10.0;
/// Upper bound on the over-relaxation factor.
const RELAX_MAX: f64 = 1.95;
/// Observed per-iteration contraction above which over-relaxation is switched on.
const RELAX_SLOW: f64 = 0.99;
/// Relative row-mass cutoff used when streaming rows for the transport cost.
const COST_TAU: f64 = 1e-20;

/// Entropic regularization strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Epsilon {
    Absolute(f64),
    /// Fraction of the squared domain diagonal.
    DiagonalFraction(f64),
    /// `sigma * max(hx, hy)^2`.
    Auto { sigma: f64 },
}

impl Default for Epsilon {
    fn default() -> Self {
        Epsilon::DiagonalFraction(1e-3)
    }
}

impl Epsilon {
    pub fn resolve(&self, grid: &Grid2D) -> f64 {
        match *self {
            Epsilon::Absolute(e) => e,
            Epsilon::DiagonalFraction(f) => f * grid.diagonal_sq(),
            Epsilon::Auto { sigma } => sigma * grid.hx.max(grid.hy).powi(2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    pub epsilon: Epsilon,
    /// Bound on the L1 row-marginal violation `||π1 − a||₁`.
    pub tol_marginal: f64,
    pub max_iter: usize,
    /// Iterate on log-potentials; the scaling form is kept for cross-checks at mild ε.
    pub log_domain: bool,
    /// Relative cutoff used by [`to_measure`] when a field enters transport.
    pub support_threshold: f64,
    /// Solve a halving sequence of larger ε first and warm-start each stage.
    pub annealing: bool,
    pub kernel: KernelPath,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        SinkhornConfig {
            epsilon: Epsilon::default(),
            tol_marginal: 1e-8,
            max_iter: 20_000,
            log_domain: true,
            support_threshold: 1e-12,
            annealing: true,
            kernel: KernelPath::Auto,
        }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        let eps_ok = match self.epsilon {
            Epsilon::Absolute(e) | Epsilon::DiagonalFraction(e) | Epsilon::Auto { sigma: e } => e > 0.0 && e.is_finite(),
        };
        if !eps_ok {
            return Err(Error::InvalidArgument(format!("epsilon must be positive: {:?}", self.epsilon)));
        }
        if !(self.tol_marginal > 0.0) {
            return Err(Error::InvalidArgument("tol_marginal must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.support_threshold) {
            return Err(Error::InvalidArgument("support_threshold must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostKind {
    #[default]
    SquaredEuclidean,
}

/// Entropic coupling `π_ij = u_i exp(−|x_i − y_j|² / ε) v_j`, stored through
/// its log-potentials.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub source: Arc<DiscreteMeasure>,
    pub target: Arc<DiscreteMeasure>,
    pub log_u: Vec<f64>,
    pub log_v: Vec<f64>,
    pub epsilon: f64,
    pub cost: CostKind,
    /// `||π1 − a||₁` measured at the returned iterate.
    pub marginal_residual: f64,
    pub iterations: usize,
}

impl TransportPlan {
    pub fn log_entry(&self, i: usize, j: usize) -> f64 {
        self.log_u[i] + self.log_v[j] - sq_dist(&self.source.points()[i], &self.target.points()[j]) / self.epsilon
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.log_entry(i, j).exp()
    }

    fn kernel(&self) -> GibbsKernel {
        GibbsKernel::new(&self.source, &self.target, self.epsilon, KernelPath::Auto).expect("plan epsilon is positive")
    }

    /// `log(π 1)` over the source support.
    pub fn log_row_mass(&self) -> Vec<f64> {
        let kv = self.kernel().log_apply(&self.log_v);
        kv.iter().zip(&self.log_u).map(|(k, u)| k + u).collect()
    }

    pub fn row_marginals(&self) -> Vec<f64> {
        self.log_row_mass().into_iter().map(f64::exp).collect()
    }

    pub fn col_marginals(&self) -> Vec<f64> {
        let ktu = self.kernel().log_apply_t(&self.log_u);
        ktu.iter().zip(&self.log_v).map(|(k, v)| (k + v).exp()).collect()
    }

    /// Dense matrix, row-major over (source, target). Meant for small cases and tests.
    pub fn dense(&self) -> Vec<f64> {
        let m = self.target.len();
        (0..self.source.len() * m).map(|k| self.entry(k / m, k % m)).collect()
    }

    /// Row streamer with kernel windows precomputed for this plan.
    pub fn rows(&self) -> PlanRows<'_> {
        PlanRows::new(self)
    }
}

#[derive(Debug)]
struct TargetColumn {
    x: f64,
    /// Largest `log_v` in the column.
    gmax: f64,
    /// `(y, j)` sorted by `y`.
    entries: Vec<(f64, usize)>,
}

/// Streams the significant entries of each plan row without materializing the plan.
#[derive(Debug)]
pub struct PlanRows<'a> {
    plan: &'a TransportPlan,
    columns: Vec<TargetColumn>,
    log_row_mass: Vec<f64>,
}

impl<'a> PlanRows<'a> {
    fn new(plan: &'a TransportPlan) -> Self {
        let tgt = &plan.target;
        let nx = tgt.grid().nx;
        let mut by_col: Vec<Vec<(f64, usize)>> = vec![Vec::new(); nx];
        for (j, &k) in tgt.cells().iter().enumerate() {
            by_col[k % nx].push((tgt.points()[j][1], j));
        }
        let columns = by_col
            .into_iter()
            .enumerate()
            .filter(|(_, e)| !e.is_empty())
            .map(|(i, entries)| TargetColumn {
                x: tgt.grid().xc(i),
                gmax: entries.iter().map(|&(_, j)| plan.log_v[j]).fold(f64::NEG_INFINITY, f64::max),
                entries,
            })
            .collect();
        PlanRows {
            plan,
            columns,
            log_row_mass: plan.log_row_mass(),
        }
    }

    pub fn plan(&self) -> &TransportPlan {
        self.plan
    }

    pub fn row_mass(&self, i: usize) -> f64 {
        self.log_row_mass[i].exp()
    }

    /// Fills `buf` with `(j, π_ij)` for every entry of row `i` with
    /// `π_ij ≥ tau · rowmass_i`, in a fixed order.
    pub fn row_into(&self, i: usize, tau: f64, buf: &mut Vec<(usize, f64)>) {
        buf.clear();
        let p = self.plan;
        let inv = 1.0 / p.epsilon;
        let [xi, yi] = p.source.points()[i];
        let lu = p.log_u[i];
        let log_thr = if tau > 0.0 { tau.ln() + self.log_row_mass[i] } else { f64::NEG_INFINITY };
        let tgt_pts = p.target.points();
        for col in &self.columns {
            let dx = xi - col.x;
            let dx2 = dx * dx;
            let head = lu + col.gmax - log_thr;
            let r2 = p.epsilon * head - dx2;
            if !(r2 >= 0.0) {
                continue;
            }
            let r = r2.sqrt();
            let start = col.entries.partition_point(|&(y, _)| y < yi - r);
            for &(y, j) in &col.entries[start..] {
                if y > yi + r {
                    break;
                }
                let lw = lu + p.log_v[j] - sq_dist(&[xi, yi], &tgt_pts[j]) * inv;
                if lw >= log_thr {
                    buf.push((j, lw.exp()));
                }
            }
        }
    }
}

/// Transport part `Σ_ij C_ij π_ij` of the entropic objective, streamed row by row.
pub fn entropic_cost(plan: &TransportPlan) -> f64 {
    let rows = plan.rows();
    let tgt = plan.target.points();
    let per_row: Vec<f64> = (0..plan.source.len())
        .into_par_iter()
        .with_min_len(8)
        .map_init(Vec::new, |buf, i| {
            rows.row_into(i, COST_TAU, buf);
            let x = &plan.source.points()[i];
            buf.iter().map(|&(j, w)| w * sq_dist(x, &tgt[j])).sum::<f64>()
        })
        .collect();
    per_row.iter().sum()
}

/// ε-biased estimate of the 2-Wasserstein distance between two nonnegative fields.
pub fn wasserstein2(f: &ScalarField, g: &ScalarField, cfg: &SinkhornConfig) -> Result<f64> {
    let mu = to_measure(f, cfg.support_threshold)?;
    let nu = to_measure(g, cfg.support_threshold)?;
    let plan = sinkhorn(&mu, &nu, cfg)?;
    Ok(entropic_cost(&plan).sqrt())
}

/// Squared diameter of the bounding box of both supports.
fn support_diameter_sq(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in mu.points().iter().chain(nu.points()) {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    (hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)
}

/// Regularization levels visited, ending at `eps`.
fn schedule(mu: &DiscreteMeasure, nu: &DiscreteMeasure, eps: f64, annealing: bool) -> Vec<f64> {
    if !annealing {
        return vec![eps];
    }
    let top = support_diameter_sq(mu, nu);
    let mut levels = vec![eps];
    let mut e = eps;
    while e * 2.0 < top {
        e *= 2.0;
        levels.push(e);
    }
    levels.reverse();
    levels
}

/// Dual state carried between annealing stages.
enum State {
    Log { log_u: Vec<f64>, log_v: Vec<f64> },
    Scaling { u: Vec<f64>, v: Vec<f64> },
}

impl State {
    fn rescale(&mut self, ratio: f64) {
        match self {
            State::Log { log_u, log_v } => {
                log_u.iter_mut().chain(log_v.iter_mut()).for_each(|l| *l *= ratio);
            }
            State::Scaling { u, v } => {
                u.iter_mut().chain(v.iter_mut()).for_each(|x| *x = (x.ln() * ratio).exp());
            }
        }
    }

    fn into_logs(self) -> (Vec<f64>, Vec<f64>) {
        match self {
            State::Log { log_u, log_v } => (log_u, log_v),
            State::Scaling { u, v } => (u.iter().map(|x| x.ln()).collect(), v.iter().map(|x| x.ln()).collect()),
        }
    }
}

struct StageOutcome {
    iterations: usize,
    residual: f64,
    converged: bool,
}

fn run_stage(kernel: &GibbsKernel, a: &[f64], b: &[f64], state: &mut State, tol: f64, max_iter: usize) -> Result<StageOutcome> {
    let mut iterations = 0;
    let residual = match state {
        State::Log { log_u, log_v } => {
            let log_a: Vec<f64> = a.iter().map(|x| x.ln()).collect();
            let log_b: Vec<f64> = b.iter().map(|x| x.ln()).collect();
            let violation = |log_p: &[f64], k: &[f64], m: &[f64]| -> f64 {
                log_p.iter().zip(k).zip(m).map(|((p, k), m)| ((p + k).exp() - m).abs()).sum()
            };
            // Over-relaxed updates x <- (1 - w) x + w T(x) share the fixed point of
            // the plain iteration. Every RELAX_WINDOW iterations the plain
            // contraction rate is recovered from the observed one through the
            // relation (mu + w - 1)^2 = lambda mu w^2, and `w` is raised towards
            // 2 / (1 + sqrt(1 - lambda)). It is halved when the residual grows by
            // more than RELAX_GROWTH over a window.
            let mut omega: f64 = 1.0;
            let mut anchor: Option<(usize, f64)> = None;
            loop {
                let kv = kernel.log_apply(log_v);
                if iterations > 0 && (iterations % CHECK_EVERY == 0 || iterations == max_iter) {
                    let mut r = violation(log_u, &kv, a);
                    if omega != 1.0 {
                        r += violation(log_v, &kernel.log_apply_t(log_u), b);
                    }
                    if r <= tol || iterations == max_iter {
                        break r;
                    }
                    if iterations % RELAX_WINDOW == 0 {
                        if let Some((k, p)) = anchor {
                            if r > RELAX_GROWTH * p {
                                omega = 1.0 + 0.5 * (omega - 1.0);
                            } else {
                                let mu = (r / p).powf(1.0 / (iterations - k) as f64);
                                if mu > RELAX_SLOW {
                                    let lambda = ((mu + omega - 1.0).powi(2) / (mu * omega * omega)).min(1.0);
                                    omega = omega.max((2.0 / (1.0 + (1.0 - lambda).sqrt())).min(RELAX_MAX));
                                }
                            }
                        }
                        anchor = Some((iterations, r));
                    }
                }
                for ((u, k), la) in log_u.iter_mut().zip(&kv).zip(&log_a) {
                    *u += omega * (la - k - *u);
                }
                let ktu = kernel.log_apply_t(log_u);
                for ((v, k), lb) in log_v.iter_mut().zip(&ktu).zip(&log_b) {
                    *v += omega * (lb - k - *v);
                }
                iterations += 1;
            }
        }
        State::Scaling { u, v } => {
            let check = |x: &[f64]| x.iter().all(|y| *y > 0.0 && y.is_finite());
            loop {
                let kv = kernel.apply(v);
                if !check(&kv) {
                    return Err(Error::KernelUnderflow);
                }
                if iterations > 0 && (iterations % CHECK_EVERY == 0 || iterations == max_iter) {
                    let r: f64 = u.iter().zip(&kv).zip(a).map(|((u, k), a)| (u * k - a).abs()).sum();
                    if r <= tol || iterations == max_iter {
                        break r;
                    }
                }
                for ((ui, k), ai) in u.iter_mut().zip(&kv).zip(a) {
                    *ui = ai / k;
                }
                let ktu = kernel.apply_t(u);
                if !check(&ktu) {
                    return Err(Error::KernelUnderflow);
                }
                for ((vi, k), bi) in v.iter_mut().zip(&ktu).zip(b) {
                    *vi = bi / k;
                }
                iterations += 1;
            }
        }
    };
    Ok(StageOutcome {
        iterations,
        residual,
        converged: residual <= tol,
    })
}

/// Entropic OT between two measures by Sinkhorn iterations started from `v = 1`.
///
/// Returns the plan once the L1 row-marginal violation drops below
/// `cfg.tol_marginal`, or [`Error::MaxIterExceeded`] carrying the last iterate.
pub fn sinkhorn(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cfg: &SinkhornConfig) -> Result<TransportPlan> {
    cfg.validate()?;
    let eps = cfg.epsilon.resolve(mu.grid());
    let source = Arc::new(mu.clone());
    let target = Arc::new(nu.clone());
    let plan = |log_u, log_v, residual, iterations| TransportPlan {
        source: source.clone(),
        target: target.clone(),
        log_u,
        log_v,
        epsilon: eps,
        cost: CostKind::SquaredEuclidean,
        marginal_residual: residual,
        iterations,
    };

    if mu.len() == 1 || nu.len() == 1 {
        // The outer product a bᵀ is the only coupling.
        let (a, b) = (mu.weights(), nu.weights());
        let (log_u, log_v) = if mu.len() == 1 {
            let x = &mu.points()[0];
            (vec![0.0], nu.points().iter().zip(b).map(|(y, w)| w.ln() + sq_dist(x, y) / eps).collect())
        } else {
            let y = &nu.points()[0];
            (mu.points().iter().zip(a).map(|(x, w)| w.ln() + sq_dist(x, y) / eps).collect(), vec![0.0])
        };
        return Ok(plan(log_u, log_v, 0.0, 0));
    }

    let (a, b) = (mu.weights(), nu.weights());
    let mut state = if cfg.log_domain {
        State::Log {
            log_u: vec![0.0; mu.len()],
            log_v: vec![0.0; nu.len()],
        }
    } else {
        State::Scaling {
            u: vec![1.0; mu.len()],
            v: vec![1.0; nu.len()],
        }
    };
    let levels = schedule(mu, nu, eps, cfg.annealing);
    let mut total = 0;
    let mut prev = levels[0];
    for (s, &level) in levels.iter().enumerate() {
        if level != prev {
            state.rescale(prev / level);
        }
        prev = level;
        let kernel = GibbsKernel::new(mu, nu, level, cfg.kernel)?;
        let last = s + 1 == levels.len();
        let (tol, cap) = if last {
            (cfg.tol_marginal, cfg.max_iter)
        } else {
            (cfg.tol_marginal.max(STAGE_TOL), STAGE_MAX_ITER.min(cfg.max_iter))
        };
        let out = run_stage(&kernel, a, b, &mut state, tol, cap)?;
        total += out.iterations;
        if last {
            let (log_u, log_v) = state.into_logs();
            let p = plan(log_u, log_v, out.residual, total);
            if !out.converged {
                return Err(Error::MaxIterExceeded {
                    iterations: total,
                    residual: out.residual,
                    partial: Box::new(p),
                });
            }
            log::debug!(
                "sinkhorn: {}x{} support, eps {eps:.3e}, {} stages, {total} iterations, residual {:.2e}",
                mu.len(),
                nu.len(),
                levels.len(),
                out.residual
            );
            return Ok(p);
        }
    }
    unreachable!("schedule always ends at the target epsilon")
}
