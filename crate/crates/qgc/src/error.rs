//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by code design, bit allocation, and the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("bit width must be at least 2, got {0} (no magnitude level exists below 2 bits)")]
    InvalidBitWidth(u32),

    #[error("bit width {0} exceeds the supported maximum of 32")]
    BitWidthTooLarge(u32),

    #[error("input vector contains a non-finite value")]
    NonFiniteInput,

    #[error("byte stream too short: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },

    #[error("byte stream has wrong length: expected {expected} bytes, got {got}")]
    WireLengthMismatch { expected: usize, got: usize },

    #[error("invalid wire payload: {0}")]
    InvalidWire(String),

    #[error("straggling threshold must be >= 1, got {0}")]
    InvalidThreshold(f64),

    #[error("straggling parameter must be positive, got {0}")]
    InvalidStragglingParam(f64),

    #[error("degenerate worker: straggler probability {0} is not in [0, 1)")]
    DegenerateWorker(f64),

    #[error("degenerate straggler model: threshold {0} makes every worker straggle surely")]
    DegenerateModel(f64),

    #[error("bit budget {z_tot} is infeasible for {k} workers (needs at least 2 bits per worker)")]
    InfeasibleBudget { z_tot: u64, k: usize },

    #[error("cost coefficients must be positive, got {0}")]
    InvalidCost(f64),

    #[error("segment masses sum to {sum}, expected the partition count {n}")]
    MassMismatch { sum: f64, n: usize },

    #[error("exhaustive search over {compositions} compositions exceeds the guard of {limit}")]
    InstanceTooLarge { compositions: f64, limit: f64 },

    #[error("scheme requires k <= n, got k={k}, n={n}")]
    InfeasibleAssignment { k: usize, n: usize },

    #[error("replication degree {d} exceeds the worker count {k}")]
    InfeasibleReplication { d: usize, k: usize },

    #[error("unknown scheme '{0}' (supported: ideal_sgd, is_sgd, bgc:d=FLOAT, sgc:d=INT, osgc_equalbits, proposed)")]
    UnknownScheme(String),

    #[error("invalid scheme parameter: {0}")]
    InvalidSchemeParam(String),

    #[error("training aborted at iteration {iteration}: non-finite gradient")]
    NonFiniteGradient { iteration: usize },

    #[error("{0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
