use std::path::PathBuf;

use thiserror::Error;

use crate::ot::TransportPlan;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field has {got} values but the grid holds {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value at cell {0}")]
    NonFinite(usize),

    #[error("field mass {mass:e} is below the zero-mass threshold {threshold:e}")]
    ZeroMass { mass: f64, threshold: f64 },

    #[error("negative value {value:e} at cell {index}")]
    NegativeValue { index: usize, value: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("time mismatch: {0}")]
    TimeMismatch(String),

    #[error("unstable run at t = {time}: {reason}")]
    UnstableRun { time: f64, reason: String },

    /// Sinkhorn stopped at `max_iter`; the last iterate is returned for inspection.
    #[error("Sinkhorn did not converge after {iterations} iterations (marginal residual {residual:e})")]
    MaxIterExceeded {
        iterations: usize,
        residual: f64,
        partial: Box<TransportPlan>,
    },

    #[error("Gibbs kernel underflow in scaling mode; switch to the log-domain solver")]
    KernelUnderflow,

    #[error("{n_c} checkpoints cannot be spaced uniformly over {n_t} snapshots; valid counts: {valid:?}")]
    NonUniformCount {
        n_t: usize,
        n_c: usize,
        valid: Vec<usize>,
    },

    #[error("{what} = {value} is outside [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("no low-fidelity snapshot at t = {0}")]
    MissingLfSnapshot(f64),

    #[error("residual-first strategy needs low-fidelity runs at the bracketing parameters {lo} and {hi}")]
    MissingLfNeighbors { lo: f64, hi: f64 },

    #[error("reference field has zero norm")]
    ZeroReference,

    #[error("empty series")]
    Empty,

    #[error("first value of the series is zero")]
    ZeroFirstValue,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("pair {pair}{tag}: {source}")]
    Pair {
        pair: usize,
        tag: String,
        source: Box<Error>,
    },

    #[error("at t = {time}: {source}")]
    AtTime { time: f64, source: Box<Error> },

    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Tags an error with the index of the checkpoint pair it came from.
    pub fn in_pair(self, pair: usize, tag: &str) -> Error {
        Error::Pair {
            pair,
            tag: tag.to_string(),
            source: Box::new(self),
        }
    }

    pub fn at_time(self, time: f64) -> Error {
        Error::AtTime {
            time,
            source: Box::new(self),
        }
    }

    /// The innermost error once pair/time tags are peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::Pair { source, .. } | Error::AtTime { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
