//! Checkpoint-based displacement-interpolation ROM over a single trajectory.
//!
//! Offline, consecutive checkpoints are coupled by entropic plans. Online, a
//! query time is mapped to its bracketing pair and a virtual time
//! `α = (t − t_k) / (t_{k+1} − t_k)`, and the pair is displaced to `α`.

use rayon::prelude::*;

use crate::displacement::{displace, DiPair, OtContext};
use crate::error::{Error, Result};
use crate::field::{mass, Grid2D, ScalarField, Trajectory};

/// Slack when matching query times against checkpoint times.
const TIME_TOL: f64 = 1e-10;

/// Checkpoint counts that divide `n_t` snapshots into equal strides.
pub fn valid_checkpoint_counts(n_t: usize) -> Vec<usize> {
    if n_t < 2 {
        return Vec::new();
    }
    (2..=n_t).filter(|c| (n_t - 1) % (c - 1) == 0).collect()
}

/// Indices `0, s, 2s, …, n_t − 1` with stride `s = (n_t − 1) / (n_c − 1)`.
pub fn select_uniform_checkpoints(n_t: usize, n_c: usize) -> Result<Vec<usize>> {
    if n_c < 2 || n_c > n_t || (n_t - 1) % (n_c - 1) != 0 {
        return Err(Error::NonUniformCount {
            n_t,
            n_c,
            valid: valid_checkpoint_counts(n_t),
        });
    }
    let stride = (n_t - 1) / (n_c - 1);
    Ok((0..n_c).map(|k| k * stride).collect())
}

/// Maps `t` to `(k, α)` over increasing `times` with right-closed brackets
/// `(t_k, t_{k+1}]`; the first time maps to `(0, 0)`.
pub fn bracket_time(times: &[f64], t: f64) -> Result<(usize, f64)> {
    if times.len() < 2 {
        return Err(Error::InvalidArgument("need at least two times to bracket".into()));
    }
    let (lo, hi) = (times[0], times[times.len() - 1]);
    if t < lo - TIME_TOL || t > hi + TIME_TOL {
        return Err(Error::OutOfRange {
            what: "query time",
            value: t,
            lo,
            hi,
        });
    }
    let k = times[1..].partition_point(|&s| s < t - TIME_TOL).min(times.len() - 2);
    let alpha = ((t - times[k]) / (times[k + 1] - times[k])).clamp(0.0, 1.0);
    Ok((k, alpha))
}

/// Offline state of the DI-ROM: checkpoints and the plans linking them.
#[derive(Debug, Clone)]
pub struct CheckpointSet {
    pub grid: Grid2D,
    pub indices: Vec<usize>,
    pub times: Vec<f64>,
    pub masses: Vec<f64>,
    pub pairs: Vec<DiPair>,
}

impl CheckpointSet {
    /// Couples each consecutive pair of checkpoint snapshots. Failures carry the pair index.
    pub fn build(traj: &Trajectory, indices: &[usize], ctx: &OtContext) -> Result<CheckpointSet> {
        if indices.len() < 2 {
            return Err(Error::InvalidArgument("at least two checkpoints are required".into()));
        }
        if indices.windows(2).any(|w| w[1] <= w[0]) || *indices.last().unwrap() >= traj.len() {
            return Err(Error::InvalidArgument("checkpoint indices must increase and lie in the trajectory".into()));
        }
        let threshold = ctx.cfg.sinkhorn.support_threshold;
        let pairs = (0..indices.len() - 1)
            .into_par_iter()
            .map(|k| {
                DiPair::build(traj.field(indices[k]), traj.field(indices[k + 1]), ctx, threshold)
                    .map_err(|e| e.in_pair(k, ""))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CheckpointSet {
            grid: *traj.grid(),
            indices: indices.to_vec(),
            times: indices.iter().map(|&i| traj.times()[i]).collect(),
            masses: indices.iter().map(|&i| mass(traj.field(i))).collect(),
            pairs,
        })
    }

    /// Synthesized field at time `t` on the trajectory grid.
    pub fn query(&self, t: f64) -> Result<ScalarField> {
        self.query_on(t, &self.grid)
    }

    pub fn query_on(&self, t: f64, grid: &Grid2D) -> Result<ScalarField> {
        let (k, alpha) = bracket_time(&self.times, t)?;
        displace(&self.pairs[k], alpha, grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::displacement::InterpConfig;
    use crate::field::Fidelity;
    use crate::metrics::relative_l2;

    #[test]
    fn uniform_checkpoints_on_401_snapshots() {
        let idx = select_uniform_checkpoints(401, 41).unwrap();
        assert_eq!(idx.len(), 41);
        assert!(idx.iter().enumerate().all(|(k, &i)| i == 10 * k));
        let idx = select_uniform_checkpoints(401, 11).unwrap();
        assert_eq!(idx[1], 40);
        assert_eq!(*idx.last().unwrap(), 400);
        match select_uniform_checkpoints(401, 30) {
            Err(Error::NonUniformCount { valid, .. }) => {
                for c in [11, 21, 41, 51, 81] {
                    assert!(valid.contains(&c));
                }
                assert!(!valid.contains(&30));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn time_brackets_are_right_closed() {
        let times = [1.0, 2.0, 3.0];
        assert_eq!(bracket_time(&times, 1.0).unwrap(), (0, 0.0));
        assert_eq!(bracket_time(&times, 1.5).unwrap(), (0, 0.5));
        assert_eq!(bracket_time(&times, 2.0).unwrap(), (0, 1.0));
        assert_eq!(bracket_time(&times, 2.25).unwrap(), (1, 0.25));
        assert_eq!(bracket_time(&times, 3.0).unwrap(), (1, 1.0));
        assert!(matches!(bracket_time(&times, 3.1), Err(Error::OutOfRange { .. })));
        assert!(matches!(bracket_time(&times, 0.9), Err(Error::OutOfRange { .. })));
    }

    fn blob_trajectory(n: usize, speed: f64) -> Trajectory {
        let g = Grid2D::unit_square(32);
        let times: Vec<f64> = (0..n).map(|k| k as f64 * 0.1).collect();
        let fields = times
            .iter()
            .map(|t| {
                let cx = 0.3 + speed * t;
                ScalarField::from_fn(g, |x, y| (-((x - cx).powi(2) + (y - 0.5).powi(2)) / 0.01).exp())
            })
            .collect();
        Trajectory::new(g, times, fields, Fidelity::High, 0.0).unwrap()
    }

    #[test]
    fn two_checkpoints_give_one_plan() {
        let traj = blob_trajectory(5, 0.1);
        let ctx = OtContext::new(InterpConfig::default());
        let cs = CheckpointSet::build(&traj, &select_uniform_checkpoints(5, 2).unwrap(), &ctx).unwrap();
        assert_eq!(cs.pairs.len(), 1);
        assert_eq!(cs.times, vec![0.0, 0.4]);
    }

    #[test]
    fn constant_trajectory_is_reproduced() {
        let traj = blob_trajectory(5, 0.0);
        let ctx = OtContext::new(InterpConfig::default());
        let cs = CheckpointSet::build(&traj, &[0, 2, 4], &ctx).unwrap();
        for t in [0.0, 0.1, 0.25, 0.4] {
            assert!(relative_l2(&cs.query(t).unwrap(), traj.field(0)).unwrap() <= 0.05);
        }
    }

    #[test]
    fn checkpoint_queries_reproduce_snapshots_and_masses() {
        let traj = blob_trajectory(9, 0.4);
        let ctx = OtContext::new(InterpConfig::default());
        let cs = CheckpointSet::build(&traj, &[0, 4, 8], &ctx).unwrap();
        for &k in &cs.indices {
            let q = cs.query(traj.times()[k]).unwrap();
            assert!(relative_l2(&q, traj.field(k)).unwrap() <= 0.03);
        }
        let q = cs.query(0.2).unwrap();
        let expected = 0.5 * (cs.masses[0] + cs.masses[1]);
        assert!((mass(&q) - expected).abs() <= 1e-12 * expected);
        assert!(matches!(cs.query(0.9), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn zero_mass_snapshot_reports_its_pair() {
        let mut traj = blob_trajectory(3, 0.1);
        let g = *traj.grid();
        let fields = vec![traj.field(0).clone(), traj.field(1).clone(), ScalarField::zeros(g)];
        traj = Trajectory::new(g, traj.times().to_vec(), fields, Fidelity::High, 0.0).unwrap();
        let ctx = OtContext::new(InterpConfig::default());
        match CheckpointSet::build(&traj, &[0, 1, 2], &ctx) {
            Err(Error::Pair { pair, source, .. }) => {
                assert_eq!(pair, 1);
                assert!(matches!(*source, Error::ZeroMass { .. }));
            }
            other => panic!("{other:?}"),
        }
    }
}
