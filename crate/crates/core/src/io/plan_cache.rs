//! Content-addressed store of transport plans in the `PLN1` container.
//!
//! Layout (little-endian): magic `PLN1`, source grid, target grid, `f64 ε`,
//! `f64` marginal residual, `u64` iterations, `u64 n`, `u64 m`, source cells
//! (`u64 × n`), source weights, target cells, target weights, `log u`, `log v`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::atomic_write;
use super::bytes::{Reader, Writer};
use crate::error::Result;
use crate::ot::{CostKind, DiscreteMeasure, Epsilon, KernelPath, SinkhornConfig, TransportPlan};

const MAGIC: &[u8; 4] = b"PLN1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanCache {
    dir: PathBuf,
}

fn hash_measure(h: &mut Sha256, m: &DiscreteMeasure) {
    let g = m.grid();
    h.update((g.nx as u64).to_le_bytes());
    h.update((g.ny as u64).to_le_bytes());
    for v in [g.x0, g.y0, g.hx, g.hy] {
        h.update(v.to_le_bytes());
    }
    h.update((m.len() as u64).to_le_bytes());
    for (&c, &w) in m.cells().iter().zip(m.weights()) {
        h.update((c as u64).to_le_bytes());
        h.update(w.to_le_bytes());
    }
}

impl PlanCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        PlanCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Hex SHA-256 over both measures and every solver setting that affects the plan.
    pub fn key(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cfg: &SinkhornConfig) -> String {
        let mut h = Sha256::new();
        h.update(MAGIC);
        hash_measure(&mut h, mu);
        hash_measure(&mut h, nu);
        let (tag, value) = match cfg.epsilon {
            Epsilon::Absolute(e) => (0u8, e),
            Epsilon::DiagonalFraction(f) => (1, f),
            Epsilon::Auto { sigma } => (2, sigma),
        };
        h.update([tag]);
        h.update(value.to_le_bytes());
        h.update(cfg.tol_marginal.to_le_bytes());
        h.update((cfg.max_iter as u64).to_le_bytes());
        h.update([cfg.log_domain as u8, cfg.annealing as u8]);
        let path = match cfg.kernel {
            KernelPath::Auto => 0u8,
            KernelPath::Separable => 1,
            KernelPath::Streamed => 2,
        };
        h.update([path]);
        hex::encode(h.finalize())
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.pln"))
    }

    /// Loads the plan stored under `key` if it exists and was built on exactly these measures.
    pub fn load(&self, key: &str, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Option<TransportPlan> {
        let path = self.path(key);
        let data = fs::read(&path).ok()?;
        match decode(&data, &path, mu, nu) {
            Ok(plan) => plan,
            Err(e) => {
                log::warn!("ignoring unreadable plan cache entry: {e}");
                None
            }
        }
    }

    pub fn store(&self, key: &str, plan: &TransportPlan) -> Result<()> {
        atomic_write(&self.path(key), &encode(plan))
    }
}

fn encode(plan: &TransportPlan) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.grid(plan.source.grid());
    w.grid(plan.target.grid());
    w.f64(plan.epsilon);
    w.f64(plan.marginal_residual);
    w.u64(plan.iterations as u64);
    w.u64(plan.source.len() as u64);
    w.u64(plan.target.len() as u64);
    for m in [&plan.source, &plan.target] {
        m.cells().iter().for_each(|&c| w.u64(c as u64));
        w.f64s(m.weights());
    }
    w.f64s(&plan.log_u);
    w.f64s(&plan.log_v);
    w.buf
}

fn decode(data: &[u8], path: &Path, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Option<TransportPlan>> {
    let mut r = Reader::new(data, path);
    if r.take(4)? != MAGIC {
        return Err(r.error("not a PLN1 file"));
    }
    let (gs, gt) = (r.grid()?, r.grid()?);
    let epsilon = r.f64()?;
    let residual = r.f64()?;
    let iterations = r.u64()? as usize;
    let n = r.u64()? as usize;
    let m = r.u64()? as usize;
    let mut same = gs == *mu.grid() && gt == *nu.grid() && n == mu.len() && m == nu.len();
    for meas in [mu, nu] {
        let len = meas.len();
        let mut cells = Vec::with_capacity(len);
        for _ in 0..if same { len } else { 0 } {
            cells.push(r.u64()? as usize);
        }
        let weights = if same { r.f64s(len)? } else { Vec::new() };
        same = same
            && cells == meas.cells()
            && weights.iter().zip(meas.weights()).all(|(a, b)| a.to_bits() == b.to_bits());
    }
    if !same {
        return Ok(None);
    }
    let log_u = r.f64s(n)?;
    let log_v = r.f64s(m)?;
    r.finish()?;
    Ok(Some(TransportPlan {
        source: Arc::new(mu.clone()),
        target: Arc::new(nu.clone()),
        log_u,
        log_v,
        epsilon,
        cost: CostKind::SquaredEuclidean,
        marginal_residual: residual,
        iterations,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Grid2D, ScalarField};
    use crate::ot::{sinkhorn, to_measure};

    fn measures() -> (DiscreteMeasure, DiscreteMeasure) {
        let g = Grid2D::unit_square(12);
        let a = ScalarField::from_fn(g, |x, y| (-((x - 0.3).powi(2) + (y - 0.4).powi(2)) / 0.01).exp());
        let b = ScalarField::from_fn(g, |x, y| (-((x - 0.6).powi(2) + (y - 0.5).powi(2)) / 0.02).exp());
        (to_measure(&a, 1e-6).unwrap(), to_measure(&b, 1e-6).unwrap())
    }

    #[test]
    fn store_then_load_is_bitwise() {
        let (mu, nu) = measures();
        let cfg = SinkhornConfig::default();
        let plan = sinkhorn(&mu, &nu, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let cache = PlanCache::new(dir.path());
        let key = PlanCache::key(&mu, &nu, &cfg);
        assert!(cache.load(&key, &mu, &nu).is_none());
        cache.store(&key, &plan).unwrap();
        let back = cache.load(&key, &mu, &nu).unwrap();
        assert_eq!(back.log_u, plan.log_u);
        assert_eq!(back.log_v, plan.log_v);
        assert_eq!(back.epsilon.to_bits(), plan.epsilon.to_bits());
        assert_eq!(back.iterations, plan.iterations);
        // the same file does not match a different pair of measures
        assert!(cache.load(&key, &nu, &mu).is_none());
    }

    #[test]
    fn key_depends_on_inputs_and_settings() {
        let (mu, nu) = measures();
        let cfg = SinkhornConfig::default();
        let k = PlanCache::key(&mu, &nu, &cfg);
        assert_eq!(k.len(), 64);
        assert_eq!(k, PlanCache::key(&mu, &nu, &cfg));
        assert_ne!(k, PlanCache::key(&nu, &mu, &cfg));
        let other = SinkhornConfig {
            tol_marginal: 1e-9,
            ..cfg
        };
        assert_ne!(k, PlanCache::key(&mu, &nu, &other));
    }
}
