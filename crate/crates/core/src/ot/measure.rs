use crate::error::{Error, Result};
use crate::field::{check_nonnegative, mass, Grid2D, ScalarField};

/// Probability measure supported on a subset of grid cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    grid: Grid2D,
    cells: Vec<usize>,
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Builds a measure from strictly increasing cell indices and positive
    /// weights summing to one (within `1e-12`).
    pub fn new(grid: Grid2D, cells: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if cells.len() != weights.len() || cells.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "{} cells for {} weights",
                cells.len(),
                weights.len()
            )));
        }
        if cells.windows(2).any(|w| w[1] <= w[0]) || *cells.last().unwrap() >= grid.len() {
            return Err(Error::InvalidArgument("support cells must be increasing and inside the grid".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("weights must be positive and finite".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, expected 1")));
        }
        let points = cells.iter().map(|&k| grid.center(k)).collect();
        Ok(DiscreteMeasure {
            grid,
            cells,
            points,
            weights,
        })
    }

    /// Single Dirac mass at cell `k`.
    pub fn dirac(grid: Grid2D, k: usize) -> Result<Self> {
        DiscreteMeasure::new(grid, vec![k], vec![1.0])
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Weights scattered back onto the grid as a density (unit mass).
    pub fn to_field(&self) -> ScalarField {
        let mut values = vec![0.0; self.grid.len()];
        let inv_area = 1.0 / self.grid.cell_area();
        for (&k, &w) in self.cells.iter().zip(&self.weights) {
            values[k] = w * inv_area;
        }
        ScalarField::from_parts(self.grid, values)
    }
}

/// Restricts a nonnegative field to cells above `support_threshold * max(f)` and
/// renormalizes the kept values into probability weights.
pub fn to_measure(f: &ScalarField, support_threshold: f64) -> Result<DiscreteMeasure> {
    check_nonnegative(f)?;
    let grid = *f.grid();
    let m = mass(f);
    if m <= grid.mass_floor() {
        return Err(Error::ZeroMass {
            mass: m,
            threshold: grid.mass_floor(),
        });
    }
    let cut = support_threshold.max(0.0) * f.max();
    let (cells, vals): (Vec<usize>, Vec<f64>) = f
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > cut && v > 0.0)
        .map(|(k, &v)| (k, v))
        .unzip();
    let total: f64 = vals.iter().sum();
    let weights: Vec<f64> = vals.iter().map(|v| v / total).collect();
    let points = cells.iter().map(|&k| grid.center(k)).collect();
    Ok(DiscreteMeasure {
        grid,
        cells,
        points,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_is_a_dirac() {
        let g = Grid2D::unit_square(8);
        let mut v = vec![0.0; 64];
        v[13] = 4.0;
        let m = to_measure(&ScalarField::new(g, v).unwrap(), 1e-12).unwrap();
        assert_eq!(m.cells(), &[13]);
        assert_eq!(m.weights(), &[1.0]);
    }

    #[test]
    fn uniform_field_keeps_every_cell() {
        let g = Grid2D::unit_square(8);
        let m = to_measure(&ScalarField::constant(g, 0.2), 0.0).unwrap();
        assert_eq!(m.len(), 64);
        assert!(m.weights().iter().all(|&w| (w - 1.0 / 64.0).abs() < 1e-16));
    }

    #[test]
    fn sparse_field_support_size() {
        let g = Grid2D::unit_square(100);
        let f = ScalarField::from_fn(g, |x, y| if x < 0.1 && y < 0.1 { 1.0 + x } else { 0.0 });
        let m = to_measure(&f, 1e-10).unwrap();
        assert_eq!(m.len(), 100);
        let total: f64 = m.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn discarded_mass_is_bounded() {
        let g = Grid2D::unit_square(32);
        let f = ScalarField::from_fn(g, |x, y| (-((x - 0.5).powi(2) + (y - 0.5).powi(2)) / 0.001).exp());
        let thr = 1e-6;
        let m = to_measure(&f, thr).unwrap();
        let kept: f64 = m.cells().iter().map(|&k| f.values()[k]).sum::<f64>() * g.cell_area();
        let discarded = mass(&f) - kept;
        assert!(discarded <= thr * g.len() as f64 * f.max() * g.cell_area());
    }

    #[test]
    fn zero_and_negative_fields_rejected() {
        let g = Grid2D::unit_square(4);
        assert!(matches!(to_measure(&ScalarField::zeros(g), 0.0), Err(Error::ZeroMass { .. })));
        let f = ScalarField::constant(g, -1.0);
        assert!(matches!(to_measure(&f, 0.0), Err(Error::NegativeValue { .. })));
    }
}
