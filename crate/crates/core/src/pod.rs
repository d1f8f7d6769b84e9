//! Proper orthogonal decomposition baseline by the method of snapshots.
//!
//! The Gram matrix of the snapshots under the cell-area weighted inner product
//! is eigen-decomposed; singular values are the square roots of its
//! eigenvalues and modes are the matching normalized snapshot combinations.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{Grid2D, ScalarField};

/// Eigenvalues below `RANK_TOL * n * λ_max` count as zero.
const RANK_TOL: f64 = 64.0 * f64::EPSILON;
/// A re-orthogonalized mode shorter than this is numerically dependent and dropped.
const DEPENDENT_NORM: f64 = 1e-8;

/// Smallest `N_r` with `Σ_{i≤N_r} σ_i² / Σ σ_i² ≥ 1 − energy_tol`.
pub fn energy_rank(singular_values: &[f64], energy_tol: f64) -> usize {
    let total: f64 = singular_values.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return 0;
    }
    let mut acc = 0.0;
    for (k, s) in singular_values.iter().enumerate() {
        acc += s * s;
        if acc / total >= 1.0 - energy_tol {
            return k + 1;
        }
    }
    singular_values.len()
}

#[derive(Debug, Clone)]
pub struct PodBasis {
    grid: Grid2D,
    /// All numerically independent modes, orthonormal in the weighted inner product.
    modes: Vec<ScalarField>,
    /// One value per snapshot, non-increasing.
    singular_values: Vec<f64>,
    mean: Option<ScalarField>,
    energy_tol: f64,
    n_r: usize,
}

impl PodBasis {
    pub fn modes(&self) -> &[ScalarField] {
        &self.modes
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn mean(&self) -> Option<&ScalarField> {
        self.mean.as_ref()
    }

    pub fn energy_tol(&self) -> f64 {
        self.energy_tol
    }

    /// Number of modes kept by the energy criterion.
    pub fn n_r(&self) -> usize {
        self.n_r
    }

    /// Orthogonal projection onto the first `n_r` modes (plus the mean, if any).
    pub fn reconstruct(&self, f: &ScalarField) -> Result<ScalarField> {
        self.reconstruct_with(f, self.n_r)
    }

    /// Projection onto the first `n` available modes.
    pub fn reconstruct_with(&self, f: &ScalarField, n: usize) -> Result<ScalarField> {
        if *f.grid() != self.grid {
            return Err(Error::GridMismatch(format!("field on {} for a basis on {}", f.grid(), self.grid)));
        }
        let centered = match &self.mean {
            Some(m) => f.sub(m)?,
            None => f.clone(),
        };
        let mut out = match &self.mean {
            Some(m) => m.values().to_vec(),
            None => vec![0.0; self.grid.len()],
        };
        for mode in self.modes.iter().take(n) {
            let c = centered.dot(mode)?;
            out.iter_mut().zip(mode.values()).for_each(|(o, m)| *o += c * m);
        }
        ScalarField::new(self.grid, out)
    }
}

/// POD of the given snapshots, optionally after subtracting their mean.
pub fn compute_pod(snapshots: &[ScalarField], energy_tol: f64, center: bool) -> Result<PodBasis> {
    let first = snapshots.first().ok_or(Error::Empty)?;
    let grid = *first.grid();
    if let Some(s) = snapshots.iter().find(|s| *s.grid() != grid) {
        return Err(Error::GridMismatch(format!("snapshot on {} with basis grid {grid}", s.grid())));
    }
    if !(energy_tol > 0.0 && energy_tol < 1.0) {
        return Err(Error::OutOfRange {
            what: "energy_tol",
            value: energy_tol,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let mean = center.then(|| {
        let inv = 1.0 / snapshots.len() as f64;
        let mut acc = vec![0.0; grid.len()];
        for s in snapshots {
            acc.iter_mut().zip(s.values()).for_each(|(a, v)| *a += v * inv);
        }
        ScalarField::from_parts(grid, acc)
    });
    let data: Vec<ScalarField> = match &mean {
        Some(m) => snapshots.iter().map(|s| s.sub(m)).collect::<Result<_>>()?,
        None => snapshots.to_vec(),
    };
    let n = data.len();
    let entries: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (a, b) = (k / n, k % n);
            if b < a {
                0.0
            } else {
                data[a].dot(&data[b]).expect("same grid")
            }
        })
        .collect();
    let gram = DMatrix::from_fn(n, n, |a, b| if b >= a { entries[a * n + b] } else { entries[b * n + a] });
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lambda_max = eig.eigenvalues[order[0]].max(0.0);
    let cutoff = RANK_TOL * n as f64 * lambda_max;
    let singular_values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0).sqrt()).collect();

    let mut modes: Vec<ScalarField> = Vec::new();
    for (&k, &sigma) in order.iter().zip(&singular_values) {
        if eig.eigenvalues[k] <= cutoff || sigma == 0.0 {
            break;
        }
        let q = eig.eigenvectors.column(k);
        let mut v = vec![0.0; grid.len()];
        for (a, s) in data.iter().enumerate() {
            let c = q[a] / sigma;
            v.iter_mut().zip(s.values()).for_each(|(x, y)| *x += c * y);
        }
        let mut mode = ScalarField::from_parts(grid, v);
        // two Gram-Schmidt sweeps against the modes already accepted
        for _ in 0..2 {
            for m in &modes {
                let c = mode.dot(m)?;
                mode = mode.sub(&m.scaled(c))?;
            }
        }
        let norm = mode.l2_norm();
        if norm < DEPENDENT_NORM {
            continue;
        }
        modes.push(mode.scaled(1.0 / norm));
    }
    let n_r = energy_rank(&singular_values, energy_tol).min(modes.len()).max(1.min(modes.len()));
    Ok(PodBasis {
        grid,
        modes,
        singular_values,
        mean,
        energy_tol,
        n_r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::relative_l2;
    use proptest::prelude::*;

    fn snapshots(grid: Grid2D, n: usize) -> Vec<ScalarField> {
        (0..n)
            .map(|k| {
                let c = 0.3 + 0.4 * k as f64 / n as f64;
                ScalarField::from_fn(grid, |x, y| (-((x - c).powi(2) + (y - 0.5).powi(2)) / 0.01).exp())
            })
            .collect()
    }

    #[test]
    fn energy_rank_examples() {
        assert_eq!(energy_rank(&[2.0, 1.0], 0.25), 1);
        assert_eq!(energy_rank(&[2.0, 1.0], 0.1), 2);
    }

    #[test]
    fn repeated_snapshot_is_rank_one() {
        let g = Grid2D::unit_square(16);
        let s = snapshots(g, 1).pop().unwrap();
        let basis = compute_pod(&[s.clone(), s.clone(), s.clone()], 1e-6, false).unwrap();
        assert_eq!(basis.n_r(), 1);
        assert_eq!(basis.modes().len(), 1);
        let sv = basis.singular_values();
        assert!(sv[0] > 0.0);
        assert!(sv[1..].iter().all(|&x| x <= 1e-12 * sv[0]));
    }

    #[test]
    fn modes_are_orthonormal_and_energy_matches() {
        let g = Grid2D::unit_square(24);
        let snaps = snapshots(g, 8);
        let basis = compute_pod(&snaps, 1e-6, false).unwrap();
        for (a, ma) in basis.modes().iter().enumerate() {
            for (b, mb) in basis.modes().iter().enumerate() {
                let d = ma.dot(mb).unwrap();
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((d - expected).abs() <= 1e-10);
            }
        }
        let sv = basis.singular_values();
        assert!(sv.windows(2).all(|w| w[0] >= w[1]));
        let fro: f64 = snaps.iter().map(|s| s.dot(s).unwrap()).sum();
        let energy: f64 = sv.iter().map(|s| s * s).sum();
        assert!((energy - fro).abs() <= 1e-10 * fro);
    }

    #[test]
    fn training_snapshots_are_reproduced_with_all_modes() {
        let g = Grid2D::unit_square(24);
        let snaps = snapshots(g, 6);
        for center in [false, true] {
            let basis = compute_pod(&snaps, 1e-6, center).unwrap();
            for s in &snaps {
                let r = basis.reconstruct_with(s, basis.modes().len()).unwrap();
                assert!(relative_l2(&r, s).unwrap() <= 1e-8);
            }
        }
    }

    #[test]
    fn orthogonal_field_projects_to_zero() {
        let g = Grid2D::unit_square(8);
        let mut a = vec![0.0; 64];
        a[3] = 1.0;
        let mut b = vec![0.0; 64];
        b[40] = 1.0;
        let basis = compute_pod(&[ScalarField::new(g, a).unwrap()], 1e-6, false).unwrap();
        let out = basis.reconstruct(&ScalarField::new(g, b).unwrap()).unwrap();
        assert!(out.max_abs() == 0.0);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let basis = compute_pod(&snapshots(Grid2D::unit_square(8), 2), 1e-6, false).unwrap();
        let f = ScalarField::zeros(Grid2D::unit_square(16));
        assert!(matches!(basis.reconstruct(&f), Err(Error::GridMismatch(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn projection_is_idempotent_and_non_expansive(seed in 0u64..1000) {
            let g = Grid2D::unit_square(12);
            let basis = compute_pod(&snapshots(g, 5), 1e-3, false).unwrap();
            let s = seed as f64;
            let f = ScalarField::from_fn(g, |x, y| (x * 5.0 + s).sin() * (y * 3.0 - s).cos());
            let p = basis.reconstruct(&f).unwrap();
            let pp = basis.reconstruct(&p).unwrap();
            prop_assert!(p.l2_norm() <= f.l2_norm() * (1.0 + 1e-12));
            prop_assert!(pp.sub(&p).unwrap().l2_norm() <= 1e-10 * p.l2_norm().max(1e-300));
        }
    }
}
