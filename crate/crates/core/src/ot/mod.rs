//! Entropic optimal transport between grid-supported discrete measures.

mod exact1d;
mod kernel;
mod measure;
mod sinkhorn;

pub use exact1d::exact_1d_cost;
pub use kernel::{GibbsKernel, KernelPath};
pub use measure::{to_measure, DiscreteMeasure};
pub use sinkhorn::{entropic_cost, sinkhorn, wasserstein2, CostKind, Epsilon, PlanRows, SinkhornConfig, TransportPlan};
