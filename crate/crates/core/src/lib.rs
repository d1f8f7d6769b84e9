//! Optimal-transport reduced-order modeling for diffuse-interface phase fields.
//!
//! The crate is organized bottom-up:
//!
//! - [`field`]: uniform 2D grids, scalar fields, trajectories, prolongation and
//!   restriction between grids.
//! - [`fom`]: a kinematic conservative Allen-Cahn solver driven by the
//!   Rider-Kothe vortex, used to generate snapshot datasets.
//! - [`ot`]: entropic optimal transport (log-domain Sinkhorn on grid-supported
//!   measures) and an exact 1D oracle.
//! - [`displacement`]: McCann interpolation through an entropic plan, including
//!   the signed positive/negative split.
//! - [`rom_di`]: checkpoint-based displacement-interpolation ROM over a single
//!   trajectory.
//! - [`pod`]: proper orthogonal decomposition baseline.
//! - [`multifidelity`]: residual correction of a low-fidelity trajectory.
//! - [`parametric`]: two-level parametric and temporal interpolation at an
//!   unseen parameter.
//! - [`metrics`]: relative errors, interfacial area, bounds.
//! - [`io`], [`config`], [`pipeline`]: file formats, experiment configuration
//!   and the end-to-end experiment drivers used by the CLI.

pub mod config;
pub mod displacement;
pub mod error;
pub mod field;
pub mod fom;
pub mod io;
pub mod metrics;
pub mod multifidelity;
pub mod ot;
pub mod parametric;
pub mod pipeline;
pub mod pod;
pub mod rom_di;

pub use error::{Error, Result};
pub use field::{Grid2D, ScalarField, Trajectory};

/// Version string written into every output directory.
pub const VERSION: &str = concat!("otrom ", env!("CARGO_PKG_VERSION"));
