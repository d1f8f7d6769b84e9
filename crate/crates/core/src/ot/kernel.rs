//! Gibbs kernel products `K v` and `Kᵀ u` for squared-Euclidean cost.
//!
//! On grids the kernel factorizes as `K = K_x ⊗ K_y`, so a product costs two
//! sweeps of 1D contractions instead of a dense `n × m` pass. Supports are
//! handled by zero (or `-inf` in log space) padding on the full grid. The
//! streamed path evaluates kernel rows on the fly and works for any support
//! size; it is picked when the supports are small enough to be cheaper.

use rayon::prelude::*;

use super::measure::DiscreteMeasure;
use crate::error::{Error, Result};

/// Below this a separable partial sum is recomputed with an exact log-sum-exp.
const SUM_FLOOR: f64 = 1e-250;

/// Measured cost of one streamed kernel entry (an `exp`) in separable multiply-adds.
const STREAMED_ENTRY_WEIGHT: f64 = 20.0;

/// Which product implementation to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelPath {
    /// Cheapest of the two for the given supports.
    #[default]
    Auto,
    Separable,
    Streamed,
}

#[inline]
pub(crate) fn sq_dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// 1D contraction `out[o] = Σ_p exp(-(x_o - x_p)² / ε) in[p]` in linear and log form.
#[derive(Debug)]
struct Axis {
    n_in: usize,
    log_k: Vec<f64>,
    k: Vec<f64>,
}

impl Axis {
    fn new(out_coords: &[f64], in_coords: &[f64], eps: f64) -> Axis {
        let mut log_k = Vec::with_capacity(out_coords.len() * in_coords.len());
        for &xo in out_coords {
            for &xi in in_coords {
                let d = xo - xi;
                log_k.push(-d * d / eps);
            }
        }
        let k = log_k.iter().map(|l| l.exp()).collect();
        Axis {
            n_in: in_coords.len(),
            log_k,
            k,
        }
    }

    fn log_contract(&self, input: &[f64], scratch: &mut Vec<f64>, out: &mut [f64]) {
        let m = input.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY {
            out.fill(f64::NEG_INFINITY);
            return;
        }
        scratch.clear();
        scratch.extend(input.iter().map(|&l| (l - m).exp()));
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &self.k[o * self.n_in..(o + 1) * self.n_in];
            let s: f64 = row.iter().zip(scratch.iter()).map(|(k, e)| k * e).sum();
            *slot = if s >= SUM_FLOOR {
                m + s.ln()
            } else {
                let lrow = &self.log_k[o * self.n_in..(o + 1) * self.n_in];
                log_sum_exp(lrow.iter().zip(input).map(|(lk, l)| lk + l))
            };
        }
    }

    fn contract(&self, input: &[f64], out: &mut [f64]) {
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &self.k[o * self.n_in..(o + 1) * self.n_in];
            *slot = row.iter().zip(input).map(|(k, v)| k * v).sum();
        }
    }
}

/// Two-pass log-sum-exp; `-inf` for an empty or all `-inf` input.
pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Directional separable product from measure `input` onto measure `output`.
#[derive(Debug)]
struct SeparableOp {
    ax: Axis,
    ay: Axis,
    out_nx: usize,
    out_ny: usize,
    in_nx: usize,
    in_ny: usize,
    out_cells: Vec<usize>,
    in_cells: Vec<usize>,
    /// x indices of output columns that carry support.
    out_columns: Vec<usize>,
}

impl SeparableOp {
    fn new(output: &DiscreteMeasure, input: &DiscreteMeasure, eps: f64) -> SeparableOp {
        let go = output.grid();
        let gi = input.grid();
        let xs = |g: &crate::field::Grid2D| (0..g.nx).map(|i| g.xc(i)).collect::<Vec<_>>();
        let ys = |g: &crate::field::Grid2D| (0..g.ny).map(|j| g.yc(j)).collect::<Vec<_>>();
        let mut out_columns: Vec<usize> = output.cells().iter().map(|&k| k % go.nx).collect();
        out_columns.sort_unstable();
        out_columns.dedup();
        SeparableOp {
            ax: Axis::new(&xs(go), &xs(gi), eps),
            ay: Axis::new(&ys(go), &ys(gi), eps),
            out_nx: go.nx,
            out_ny: go.ny,
            in_nx: gi.nx,
            in_ny: gi.ny,
            out_cells: output.cells().to_vec(),
            in_cells: input.cells().to_vec(),
            out_columns,
        }
    }

    fn cost(output: &DiscreteMeasure, input: &DiscreteMeasure) -> f64 {
        let (go, gi) = (output.grid(), input.grid());
        (go.nx * gi.nx * gi.ny + go.nx * gi.ny * go.ny) as f64
    }

    fn log_apply(&self, log_in: &[f64]) -> Vec<f64> {
        let mut grid_in = vec![f64::NEG_INFINITY; self.in_nx * self.in_ny];
        for (&k, &l) in self.in_cells.iter().zip(log_in) {
            grid_in[k] = l;
        }
        // x sweep: stage[q * out_nx + i]
        let mut stage = vec![0.0; self.out_nx * self.in_ny];
        stage
            .par_chunks_mut(self.out_nx)
            .enumerate()
            .for_each_init(Vec::new, |scratch, (q, out)| {
                let col = &grid_in[q * self.in_nx..(q + 1) * self.in_nx];
                self.ax.log_contract(col, scratch, out);
            });
        // y sweep over supported output columns: result[c * out_ny + j]
        let mut result = vec![f64::NEG_INFINITY; self.out_columns.len() * self.out_ny];
        result
            .par_chunks_mut(self.out_ny)
            .zip(self.out_columns.par_iter())
            .for_each_init(
                || (Vec::new(), Vec::new()),
                |(scratch, col), (out, &i)| {
                    col.clear();
                    col.extend((0..self.in_ny).map(|q| stage[q * self.out_nx + i]));
                    self.ay.log_contract(col, scratch, out);
                },
            );
        self.gather(&result)
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut grid_in = vec![0.0; self.in_nx * self.in_ny];
        for (&k, &x) in self.in_cells.iter().zip(v) {
            grid_in[k] = x;
        }
        let mut stage = vec![0.0; self.out_nx * self.in_ny];
        stage
            .par_chunks_mut(self.out_nx)
            .enumerate()
            .for_each(|(q, out)| {
                self.ax.contract(&grid_in[q * self.in_nx..(q + 1) * self.in_nx], out);
            });
        let mut result = vec![0.0; self.out_columns.len() * self.out_ny];
        result
            .par_chunks_mut(self.out_ny)
            .zip(self.out_columns.par_iter())
            .for_each_init(Vec::new, |col, (out, &i)| {
                col.clear();
                col.extend((0..self.in_ny).map(|q| stage[q * self.out_nx + i]));
                self.ay.contract(col, out);
            });
        self.gather(&result)
    }

    fn gather(&self, result: &[f64]) -> Vec<f64> {
        self.out_cells
            .iter()
            .map(|&k| {
                let (i, j) = (k % self.out_nx, k / self.out_nx);
                let c = self.out_columns.binary_search(&i).expect("supported column");
                result[c * self.out_ny + j]
            })
            .collect()
    }
}

/// Product with kernel rows generated on the fly.
#[derive(Debug)]
struct StreamedOp {
    out_points: Vec<[f64; 2]>,
    in_points: Vec<[f64; 2]>,
    eps: f64,
}

impl StreamedOp {
    fn log_apply(&self, log_in: &[f64]) -> Vec<f64> {
        let inv = 1.0 / self.eps;
        self.out_points
            .par_iter()
            .with_min_len(16)
            .map(|x| {
                log_sum_exp(
                    self.in_points
                        .iter()
                        .zip(log_in)
                        .map(|(y, l)| l - sq_dist(x, y) * inv),
                )
            })
            .collect()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let inv = 1.0 / self.eps;
        self.out_points
            .par_iter()
            .with_min_len(16)
            .map(|x| {
                self.in_points
                    .iter()
                    .zip(v)
                    .map(|(y, w)| (-sq_dist(x, y) * inv).exp() * w)
                    .sum()
            })
            .collect()
    }
}

#[derive(Debug)]
enum Op {
    Separable(SeparableOp),
    Streamed(StreamedOp),
}

impl Op {
    fn log_apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Op::Separable(s) => s.log_apply(x),
            Op::Streamed(s) => s.log_apply(x),
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Op::Separable(s) => s.apply(x),
            Op::Streamed(s) => s.apply(x),
        }
    }
}

/// Gibbs kernel between a source and a target measure at fixed ε.
#[derive(Debug)]
pub struct GibbsKernel {
    forward: Op,
    backward: Op,
    pub epsilon: f64,
}

impl GibbsKernel {
    pub fn new(source: &DiscreteMeasure, target: &DiscreteMeasure, eps: f64, path: KernelPath) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {eps}")));
        }
        let separable = match path {
            KernelPath::Separable => true,
            KernelPath::Streamed => false,
            KernelPath::Auto => {
                let dense = 2.0 * (source.len() * target.len()) as f64;
                let sep = SeparableOp::cost(source, target) + SeparableOp::cost(target, source);
                sep < STREAMED_ENTRY_WEIGHT * dense
            }
        };
        let (forward, backward) = if separable {
            (
                Op::Separable(SeparableOp::new(source, target, eps)),
                Op::Separable(SeparableOp::new(target, source, eps)),
            )
        } else {
            (
                Op::Streamed(StreamedOp {
                    out_points: source.points().to_vec(),
                    in_points: target.points().to_vec(),
                    eps,
                }),
                Op::Streamed(StreamedOp {
                    out_points: target.points().to_vec(),
                    in_points: source.points().to_vec(),
                    eps,
                }),
            )
        };
        Ok(GibbsKernel {
            forward,
            backward,
            epsilon: eps,
        })
    }

    pub fn is_separable(&self) -> bool {
        matches!(self.forward, Op::Separable(_))
    }

    /// `log(K exp(log_v))` on the source support.
    pub fn log_apply(&self, log_v: &[f64]) -> Vec<f64> {
        self.forward.log_apply(log_v)
    }

    /// `log(Kᵀ exp(log_u))` on the target support.
    pub fn log_apply_t(&self, log_u: &[f64]) -> Vec<f64> {
        self.backward.log_apply(log_u)
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.forward.apply(v)
    }

    pub fn apply_t(&self, u: &[f64]) -> Vec<f64> {
        self.backward.apply(u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Grid2D, ScalarField};
    use crate::ot::measure::to_measure;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_measure(grid: Grid2D, rng: &mut ChaCha8Rng, density: f64) -> DiscreteMeasure {
        let vals = (0..grid.len())
            .map(|_| if rng.gen::<f64>() < density { rng.gen::<f64>() + 0.01 } else { 0.0 })
            .collect();
        to_measure(&ScalarField::new(grid, vals).unwrap(), 0.0).unwrap()
    }

    #[test]
    fn separable_and_streamed_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = Grid2D::unit_square(12);
        for density in [1.0, 0.3] {
            let a = random_measure(g, &mut rng, density);
            let b = random_measure(g, &mut rng, density);
            for eps in [0.5, 0.02, 0.002] {
                let sep = GibbsKernel::new(&a, &b, eps, KernelPath::Separable).unwrap();
                let st = GibbsKernel::new(&a, &b, eps, KernelPath::Streamed).unwrap();
                let lv: Vec<f64> = (0..b.len()).map(|_| rng.gen_range(-30.0..30.0)).collect();
                let lu: Vec<f64> = (0..a.len()).map(|_| rng.gen_range(-30.0..30.0)).collect();
                for (x, y) in sep.log_apply(&lv).iter().zip(st.log_apply(&lv)) {
                    assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0), "{x} vs {y}");
                }
                for (x, y) in sep.log_apply_t(&lu).iter().zip(st.log_apply_t(&lu)) {
                    assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
                }
                let v: Vec<f64> = lv.iter().map(|l| (l / 10.0).exp()).collect();
                for (x, y) in sep.apply(&v).iter().zip(st.apply(&v)) {
                    assert!((x - y).abs() <= 1e-12 * y.abs().max(1e-300));
                }
            }
        }
    }

    #[test]
    fn log_product_survives_underflow() {
        // Far-apart supports at tiny ε: the linear product underflows, the log one must not.
        let g = Grid2D::unit_square(16);
        let a = DiscreteMeasure::dirac(g, 0).unwrap();
        let b = DiscreteMeasure::dirac(g, g.len() - 1).unwrap();
        let eps = 1e-4;
        let k = GibbsKernel::new(&a, &b, eps, KernelPath::Separable).unwrap();
        let expected = -sq_dist(&a.points()[0], &b.points()[0]) / eps;
        let got = k.log_apply(&[0.0])[0];
        assert!((got - expected).abs() < 1e-9 * expected.abs());
        assert_eq!(k.apply(&[1.0])[0], 0.0);
    }

    #[test]
    fn auto_path_prefers_streaming_only_for_tiny_supports() {
        let g = Grid2D::unit_square(48);
        let tiny = DiscreteMeasure::new(g, vec![3, 900], vec![0.5, 0.5]).unwrap();
        let full = to_measure(&ScalarField::constant(g, 1.0 / g.len() as f64), 0.0).unwrap();
        assert!(!GibbsKernel::new(&tiny, &tiny, 1e-3, KernelPath::Auto).unwrap().is_separable());
        assert!(GibbsKernel::new(&full, &full, 1e-3, KernelPath::Auto).unwrap().is_separable());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mid = random_measure(g, &mut rng, 0.25);
        assert!(GibbsKernel::new(&mid, &mid, 1e-3, KernelPath::Auto).unwrap().is_separable());
    }
}
