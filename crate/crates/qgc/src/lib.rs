//! Communication-efficient gradient coding for heterogeneous,
//! straggler-prone workers.
//!
//! The crate designs unbiased gradient codes that jointly account for
//! per-worker straggler probabilities and stochastic quantization noise,
//! solves the per-worker bit-width allocation under a total budget, and
//! validates the closed-form error bounds and convergence behaviour with a
//! Monte Carlo parameter-server simulator on synthetic losses.
//!
//! Modules:
//! - [`quantizer`]: norm/sign/magnitude stochastic quantizer and wire codec
//! - [`straggler`]: heterogeneous straggler probabilities and indicators
//! - [`design`]: optimal code structure, decoders, and error bounds
//! - [`bitalloc`]: exact and low-complexity residual-bit allocation
//! - [`baselines`]: comparison schemes and scheme assembly
//! - [`loss`]: synthetic quadratic and logistic objectives
//! - [`sim`]: the training loop and Monte Carlo estimators
//! - [`checks`]: the executable acceptance suite

pub mod baselines;
pub mod bitalloc;
pub mod checks;
pub mod design;
pub mod error;
pub mod loss;
pub mod quantizer;
pub mod rng;
pub mod sim;
pub mod sparse;
pub mod straggler;

pub use baselines::{EtaChoice, SchemeInstance, SchemeKind, SchemeSpec};
pub use bitalloc::BitAllocation;
pub use design::CodeDesign;
pub use error::{Error, Result};
pub use loss::LossModel;
pub use quantizer::QuantizedMessage;
pub use sim::{LrSchedule, MetricsSeries, Optimizer, TrainConfig};
pub use sparse::SparseMatrix;
pub use straggler::WorkerProfile;
