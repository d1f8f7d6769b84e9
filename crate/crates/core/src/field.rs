//! Uniform cell-centered grids, scalar fields and snapshot trajectories.
//!
//! Storage is row-major with `i` (the x index) varying fastest: cell `(i, j)`
//! lives at `i + nx * j`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Uniform 2D Cartesian grid of `nx * ny` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub y0: f64,
    pub hx: f64,
    pub hy: f64,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, x0: f64, y0: f64, hx: f64, hy: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2x2 cells, got {nx}x{ny}")));
        }
        if !(hx > 0.0 && hy > 0.0 && hx.is_finite() && hy.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacings must be positive, got ({hx}, {hy})")));
        }
        if !(x0.is_finite() && y0.is_finite()) {
            return Err(Error::InvalidGrid("non-finite origin".into()));
        }
        Ok(Grid2D { nx, ny, x0, y0, hx, hy })
    }

    /// `n x n` cells covering the unit square.
    pub fn unit_square(n: usize) -> Self {
        Grid2D::new(n, n, 0.0, 0.0, 1.0 / n as f64, 1.0 / n as f64).expect("n >= 2")
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    #[inline]
    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    #[inline]
    pub fn xc(&self, i: usize) -> f64 {
        self.x0 + (i as f64 + 0.5) * self.hx
    }

    #[inline]
    pub fn yc(&self, j: usize) -> f64 {
        self.y0 + (j as f64 + 0.5) * self.hy
    }

    #[inline]
    pub fn center(&self, k: usize) -> [f64; 2] {
        let (i, j) = self.ij(k);
        [self.xc(i), self.yc(j)]
    }

    pub fn x_end(&self) -> f64 {
        self.x0 + self.nx as f64 * self.hx
    }

    pub fn y_end(&self) -> f64 {
        self.y0 + self.ny as f64 * self.hy
    }

    /// Squared length of the domain diagonal.
    pub fn diagonal_sq(&self) -> f64 {
        let lx = self.nx as f64 * self.hx;
        let ly = self.ny as f64 * self.hy;
        lx * lx + ly * ly
    }

    pub fn min_spacing(&self) -> f64 {
        self.hx.min(self.hy)
    }

    /// True when both grids cover the same rectangle (to a relative tolerance).
    pub fn same_domain(&self, other: &Grid2D) -> bool {
        let scale = (self.x_end() - self.x0).abs().max(self.y_end() - self.y0).max(1.0);
        let tol = 1e-10 * scale;
        (self.x0 - other.x0).abs() <= tol
            && (self.y0 - other.y0).abs() <= tol
            && (self.x_end() - other.x_end()).abs() <= tol
            && (self.y_end() - other.y_end()).abs() <= tol
    }

    /// Integer refinement ratios `(rx, ry)` of `fine` relative to `self`.
    pub fn refinement_to(&self, fine: &Grid2D) -> Result<(usize, usize)> {
        if !self.same_domain(fine) {
            return Err(Error::GridMismatch(format!(
                "domains differ: {self} vs {fine}"
            )));
        }
        if fine.nx % self.nx != 0 || fine.ny % self.ny != 0 {
            return Err(Error::GridMismatch(format!(
                "{}x{} is not an integer refinement of {}x{}",
                fine.nx, fine.ny, self.nx, self.ny
            )));
        }
        Ok((fine.nx / self.nx, fine.ny / self.ny))
    }

    /// Coarsened grid by an integer ratio.
    pub fn coarsen(&self, ratio: usize) -> Result<Grid2D> {
        if ratio == 0 || self.nx % ratio != 0 || self.ny % ratio != 0 {
            return Err(Error::GridMismatch(format!("cannot coarsen {self} by {ratio}")));
        }
        Grid2D::new(
            self.nx / ratio,
            self.ny / ratio,
            self.x0,
            self.y0,
            self.hx * ratio as f64,
            self.hy * ratio as f64,
        )
    }

    /// Zero-mass threshold for fields on this grid.
    pub fn mass_floor(&self) -> f64 {
        1e-14 * self.len() as f64
    }
}

impl fmt::Display for Grid2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{} grid on [{}, {}]x[{}, {}]",
            self.nx,
            self.ny,
            self.x0,
            self.x_end(),
            self.y0,
            self.y_end()
        )
    }
}

/// Real-valued function sampled at cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid2D,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(ScalarField { grid, values })
    }

    /// Builds a field without the finiteness scan; callers guarantee the invariant.
    pub(crate) fn from_parts(grid: Grid2D, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField { grid, values }
    }

    pub fn zeros(grid: Grid2D) -> Self {
        ScalarField::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid2D, c: f64) -> Self {
        ScalarField {
            grid,
            values: vec![c; grid.len()],
        }
    }

    /// Samples `f(x, y)` at every cell center.
    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|k| {
                let [x, y] = grid.center(k);
                f(x, y)
            })
            .collect();
        ScalarField { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> ScalarField {
        self.map(|v| v * c)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        self.check_grid(other)?;
        Ok(ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn check_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!("{} vs {}", self.grid, other.grid)));
        }
        Ok(())
    }

    /// Cell-area-weighted inner product.
    pub fn dot(&self, other: &ScalarField) -> Result<f64> {
        self.check_grid(other)?;
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        Ok(s * self.grid.cell_area())
    }

    /// Discrete L2 norm with cell-area weighting.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.values.iter().map(|v| v * v).sum();
        (s * self.grid.cell_area()).sqrt()
    }

    /// Discrete L1 norm with cell-area weighting.
    pub fn l1_norm(&self) -> f64 {
        mass(self)
    }
}

/// `hx * hy * sum |f|`.
pub fn mass(f: &ScalarField) -> f64 {
    let s: f64 = f.values.iter().map(|v| v.abs()).sum();
    s * f.grid.cell_area()
}

/// Rejects fields with values below `-1e-14 * max|f|`.
pub(crate) fn check_nonnegative(f: &ScalarField) -> Result<()> {
    let floor = -1e-14 * f.max_abs();
    match f.values.iter().position(|&v| v < floor) {
        Some(index) => Err(Error::NegativeValue {
            index,
            value: f.values[index],
        }),
        None => Ok(()),
    }
}

/// Divides a nonnegative field by its mass. Returns the unit-mass field and the
/// original mass.
pub fn normalize(f: &ScalarField) -> Result<(ScalarField, f64)> {
    check_nonnegative(f)?;
    let m = mass(f);
    let threshold = f.grid.mass_floor();
    if m <= threshold {
        return Err(Error::ZeroMass { mass: m, threshold });
    }
    Ok((f.scaled(1.0 / m), m))
}

/// Bilinear interpolation of cell-center values onto a grid refined by 2 or 4
/// in each direction. Fine cells outside the coarse cell-center hull take the
/// nearest edge value, so the result stays within `[min f, max f]`.
pub fn prolong(f: &ScalarField, fine: &Grid2D) -> Result<ScalarField> {
    let coarse = f.grid;
    let (rx, ry) = coarse.refinement_to(fine)?;
    if !matches!(rx, 2 | 4) || !matches!(ry, 2 | 4) {
        return Err(Error::GridMismatch(format!(
            "prolongation ratio must be 2 or 4, got ({rx}, {ry})"
        )));
    }
    // Fractional coarse index of each fine center, split into base index and weight.
    let axis = |n_fine: usize, r: usize, n_coarse: usize| -> Vec<(usize, usize, f64)> {
        (0..n_fine)
            .map(|i| {
                let s = (i as f64 + 0.5) / r as f64 - 0.5;
                let s = s.clamp(0.0, (n_coarse - 1) as f64);
                let i0 = (s.floor() as usize).min(n_coarse - 2);
                (i0, i0 + 1, s - i0 as f64)
            })
            .collect()
    };
    let ax = axis(fine.nx, rx, coarse.nx);
    let ay = axis(fine.ny, ry, coarse.ny);
    let mut values = Vec::with_capacity(fine.len());
    for &(j0, j1, wy) in &ay {
        for &(i0, i1, wx) in &ax {
            let v00 = f.at(i0, j0);
            let v10 = f.at(i1, j0);
            let v01 = f.at(i0, j1);
            let v11 = f.at(i1, j1);
            let lo = v00 + wx * (v10 - v00);
            let hi = v01 + wx * (v11 - v01);
            let v = lo + wy * (hi - lo);
            // Rounding can push the convex combination a hair outside its inputs.
            let vmin = v00.min(v10).min(v01).min(v11);
            let vmax = v00.max(v10).max(v01).max(v11);
            values.push(v.clamp(vmin, vmax));
        }
    }
    Ok(ScalarField::from_parts(*fine, values))
}

/// Cell averaging onto a grid coarsened by 2 or 4.
pub fn restrict(f: &ScalarField, coarse: &Grid2D) -> Result<ScalarField> {
    let (rx, ry) = coarse.refinement_to(&f.grid)?;
    if !matches!(rx, 2 | 4) || rx != ry {
        return Err(Error::GridMismatch(format!(
            "restriction ratio must be 2 or 4 in both directions, got ({rx}, {ry})"
        )));
    }
    let inv = 1.0 / (rx * ry) as f64;
    let mut values = Vec::with_capacity(coarse.len());
    for jc in 0..coarse.ny {
        for ic in 0..coarse.nx {
            let mut s = 0.0;
            for dj in 0..ry {
                for di in 0..rx {
                    s += f.at(ic * rx + di, jc * ry + dj);
                }
            }
            values.push(s * inv);
        }
    }
    Ok(ScalarField::from_parts(*coarse, values))
}

/// Maps a field onto `target`: identity on equal grids, prolongation otherwise.
pub fn to_grid(f: &ScalarField, target: &Grid2D) -> Result<ScalarField> {
    if f.grid() == target {
        Ok(f.clone())
    } else {
        prolong(f, target)
    }
}

/// Fidelity tag carried by a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fidelity {
    Low,
    High,
    Synthetic,
}

impl fmt::Display for Fidelity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fidelity::Low => "LF",
            Fidelity::High => "HF",
            Fidelity::Synthetic => "synthetic",
        })
    }
}

impl FromStr for Fidelity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "LF" => Ok(Fidelity::Low),
            "HF" => Ok(Fidelity::High),
            "synthetic" => Ok(Fidelity::Synthetic),
            other => Err(Error::InvalidArgument(format!("unknown fidelity label `{other}`"))),
        }
    }
}

/// Ordered snapshots of one run at one resolution and one parameter value.
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: Grid2D,
    times: Vec<f64>,
    fields: Vec<ScalarField>,
    pub label: Fidelity,
    pub param: f64,
    /// Free-form `key = value` metadata carried into manifests.
    pub meta: Vec<(String, String)>,
}

impl Trajectory {
    pub fn new(
        grid: Grid2D,
        times: Vec<f64>,
        fields: Vec<ScalarField>,
        label: Fidelity,
        param: f64,
    ) -> Result<Self> {
        if times.len() != fields.len() {
            return Err(Error::InvalidArgument(format!(
                "{} times for {} fields",
                times.len(),
                fields.len()
            )));
        }
        if times.is_empty() {
            return Err(Error::Empty);
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("times must be strictly increasing".into()));
        }
        if let Some(f) = fields.iter().find(|f| *f.grid() != grid) {
            return Err(Error::GridMismatch(format!("snapshot on {} in trajectory on {grid}", f.grid())));
        }
        Ok(Trajectory {
            grid,
            times,
            fields,
            label,
            param,
            meta: Vec::new(),
        })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> &[ScalarField] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn field(&self, k: usize) -> &ScalarField {
        &self.fields[k]
    }

    /// Index of the snapshot at time `t` (within `1e-10`), if any.
    pub fn index_of_time(&self, t: f64) -> Option<usize> {
        let tol = 1e-10;
        let k = self.times.partition_point(|&s| s < t - tol);
        (k < self.times.len() && (self.times[k] - t).abs() <= tol).then_some(k)
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn droplet(grid: Grid2D, r: f64, eps: f64) -> ScalarField {
        ScalarField::from_fn(grid, |x, y| {
            let d = ((x - 0.5).powi(2) + (y - 0.75).powi(2)).sqrt();
            0.5 * (1.0 + ((r - d) / (2.0 * eps)).tanh())
        })
    }

    #[test]
    fn mass_of_simple_fields() {
        let g = Grid2D::unit_square(4);
        assert_eq!(mass(&ScalarField::zeros(g)), 0.0);
        assert!((mass(&ScalarField::constant(g, 1.0)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn droplet_mass_matches_disk_area() {
        let g = Grid2D::unit_square(128);
        let r = 0.15;
        let m = mass(&droplet(g, r, 1.0 / 128.0));
        let disk = std::f64::consts::PI * r * r;
        assert!((m - disk).abs() / disk < 0.02, "m = {m}, disk = {disk}");
    }

    #[test]
    fn normalize_cases() {
        let g = Grid2D::unit_square(4);
        let f = ScalarField::constant(g, 2.0);
        let (n, m) = normalize(&f).unwrap();
        assert!((m - 2.0).abs() < 1e-15);
        assert!(n.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let (n1, m1) = normalize(&n).unwrap();
        assert!((m1 - 1.0).abs() < 1e-15);
        assert_eq!(n1, n);
        assert!(matches!(normalize(&ScalarField::zeros(g)), Err(Error::ZeroMass { .. })));
        let mut v = vec![1.0; 16];
        v[3] = -0.5;
        let neg = ScalarField::new(g, v).unwrap();
        assert!(matches!(normalize(&neg), Err(Error::NegativeValue { index: 3, .. })));
    }

    #[test]
    fn prolong_constant_and_linear() {
        let c = Grid2D::unit_square(8);
        let fgrid = Grid2D::unit_square(16);
        let p = prolong(&ScalarField::constant(c, 0.7), &fgrid).unwrap();
        assert!(p.values().iter().all(|&v| (v - 0.7).abs() < 1e-15));

        let ramp = ScalarField::from_fn(c, |x, _| x);
        let p = prolong(&ramp, &fgrid).unwrap();
        for j in 0..16 {
            // fine cells whose center lies inside the coarse center hull
            for i in 1..15 {
                assert!((p.at(i, j) - fgrid.xc(i)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn prolong_droplet_preserves_mass() {
        let c = Grid2D::unit_square(32);
        let fine = Grid2D::unit_square(128);
        let eps = 1.0 / 32.0;
        let p = prolong(&droplet(c, 0.15, eps), &fine).unwrap();
        let direct = mass(&droplet(fine, 0.15, eps));
        assert!((mass(&p) - direct).abs() / direct < 0.01);
    }

    #[test]
    fn prolong_rejects_bad_ratio() {
        let c = Grid2D::unit_square(8);
        assert!(matches!(prolong(&ScalarField::zeros(c), &Grid2D::unit_square(24)), Err(Error::GridMismatch(_))));
        let shifted = Grid2D::new(16, 16, 0.1, 0.0, 1.0 / 16.0, 1.0 / 16.0).unwrap();
        assert!(matches!(prolong(&ScalarField::zeros(c), &shifted), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn restrict_block_average() {
        let fine = Grid2D::unit_square(4);
        let coarse = Grid2D::unit_square(2);
        let f = ScalarField::from_fn(fine, |x, y| if x < 0.5 && y < 0.5 { 1.0 } else { 0.0 });
        let r = restrict(&f, &coarse).unwrap();
        assert_eq!(r.values(), &[1.0, 0.0, 0.0, 0.0]);
        let c = restrict(&ScalarField::constant(fine, 0.3), &coarse).unwrap();
        assert!(c.values().iter().all(|&v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn restrict_prolong_identity_on_linears() {
        let c = Grid2D::unit_square(8);
        let fine = Grid2D::unit_square(16);
        let lin = ScalarField::from_fn(c, |x, y| 0.3 + 2.0 * x - y);
        let back = restrict(&prolong(&lin, &fine).unwrap(), &c).unwrap();
        for j in 1..7 {
            for i in 1..7 {
                assert!((back.at(i, j) - lin.at(i, j)).abs() < 1e-12);
            }
        }
        let k = ScalarField::constant(c, 0.42);
        let back = restrict(&prolong(&k, &fine).unwrap(), &c).unwrap();
        assert!(back.values().iter().all(|&v| (v - 0.42).abs() < 1e-12));
    }

    #[test]
    fn trajectory_time_lookup() {
        let g = Grid2D::unit_square(2);
        let t = Trajectory::new(
            g,
            vec![0.0, 0.01, 0.02],
            vec![ScalarField::zeros(g); 3],
            Fidelity::High,
            0.15,
        )
        .unwrap();
        assert_eq!(t.index_of_time(0.01 + 1e-12), Some(1));
        assert_eq!(t.index_of_time(0.015), None);
        assert!(Trajectory::new(g, vec![0.0, 0.0], vec![ScalarField::zeros(g); 2], Fidelity::Low, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn prolong_is_bounded(vals in proptest::collection::vec(-3.0f64..3.0, 64)) {
            let c = Grid2D::unit_square(8);
            let f = ScalarField::new(c, vals).unwrap();
            for n in [16usize, 32] {
                let p = prolong(&f, &Grid2D::unit_square(n)).unwrap();
                prop_assert!(p.min() >= f.min() && p.max() <= f.max());
            }
        }

        #[test]
        fn restrict_conserves_mass(vals in proptest::collection::vec(0.0f64..5.0, 256)) {
            let fine = Grid2D::unit_square(16);
            let f = ScalarField::new(fine, vals).unwrap();
            for r in [2usize, 4] {
                let c = restrict(&f, &fine.coarsen(r).unwrap()).unwrap();
                let (m0, m1) = (mass(&f), mass(&c));
                prop_assert!((m0 - m1).abs() <= 1e-12 * m0.max(1e-300));
            }
        }

        #[test]
        fn normalize_is_scale_invariant(vals in proptest::collection::vec(0.01f64..5.0, 16), c in 1e-3f64..1e3) {
            let g = Grid2D::unit_square(4);
            let f = ScalarField::new(g, vals).unwrap();
            let (a, _) = normalize(&f).unwrap();
            let (b, _) = normalize(&f.scaled(c)).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-300));
            }
        }
    }
}
