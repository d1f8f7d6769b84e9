//! Error and shape diagnostics on scalar fields and trajectories.

use crate::error::{Error, Result};
use crate::field::{mass, ScalarField, Trajectory};

/// Lower and upper bounds of the band counted as interface.
pub const AREA_BAND: (f64, f64) = (0.1, 0.9);

/// `||f − ref||₂ / ||ref||₂` with the cell-area weighted norm.
pub fn relative_l2(f: &ScalarField, reference: &ScalarField) -> Result<f64> {
    let denom = reference.l2_norm();
    if denom == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(f.sub(reference)?.l2_norm() / denom)
}

/// `||f − ref||₁ / ||ref||₁` with the cell-area weighted norm.
pub fn relative_l1(f: &ScalarField, reference: &ScalarField) -> Result<f64> {
    let denom = reference.l1_norm();
    if denom == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(f.sub(reference)?.l1_norm() / denom)
}

/// Arithmetic mean of the values of a `(t, value)` series.
pub fn mean_relative_error(series: &[(f64, f64)]) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::Empty);
    }
    Ok(series.iter().map(|e| e.1).sum::<f64>() / series.len() as f64)
}

/// Area of cells whose value lies strictly inside `(lo, hi)`.
pub fn interfacial_area(f: &ScalarField, lo: f64, hi: f64) -> f64 {
    let count = f.values().iter().filter(|&&v| v > lo && v < hi).count();
    count as f64 * f.grid().cell_area()
}

/// `(min, max)` over all cells.
pub fn field_bounds(f: &ScalarField) -> (f64, f64) {
    (f.min(), f.max())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AreaNormalization {
    None,
    /// Divide by the first value of the series.
    #[default]
    First,
}

/// Interfacial area per field, optionally relative to the first one.
pub fn normalized_area_series(fields: &[ScalarField], lo: f64, hi: f64, mode: AreaNormalization) -> Result<Vec<f64>> {
    if fields.is_empty() {
        return Err(Error::Empty);
    }
    let raw: Vec<f64> = fields.iter().map(|f| interfacial_area(f, lo, hi)).collect();
    match mode {
        AreaNormalization::None => Ok(raw),
        AreaNormalization::First => {
            let first = raw[0];
            if first <= 0.0 {
                return Err(Error::ZeroFirstValue);
            }
            Ok(raw.iter().map(|a| a / first).collect())
        }
    }
}

/// Trapezoidal integral of `|a(t) − b(t)|` over the sample times.
pub fn integrated_abs_deviation(times: &[f64], a: &[f64], b: &[f64]) -> Result<f64> {
    if times.len() != a.len() || times.len() != b.len() {
        return Err(Error::InvalidArgument("series lengths differ".into()));
    }
    if times.is_empty() {
        return Err(Error::Empty);
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
    Ok(times
        .windows(2)
        .zip(d.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum())
}

/// Largest relative mass change with respect to the first snapshot.
pub fn mass_drift(traj: &Trajectory) -> f64 {
    let m0 = mass(traj.field(0));
    traj.fields().iter().map(|f| (mass(f) - m0).abs() / m0.abs()).fold(0.0, f64::max)
}

/// `max(0, max_t max φ − 1)`: how far a sequence of phase fields exceeds one.
pub fn overshoot(fields: &[ScalarField]) -> f64 {
    fields.iter().map(|f| f.max() - 1.0).fold(0.0, f64::max)
}
