//! Constrained CP tensor factorization with ADMM.
//!
//! * [`tensor`]: dense and sparse tensors, unfoldings, Khatri-Rao algebra,
//!   MTTKRP, reconstruction and relative error.
//! * [`constraints`]: constraint sets and their projections.
//! * [`solver`]: the centralized ADMM solver, stopping rules, penalty
//!   adaptation, restarts and a KKT checker.
//! * [`block`]: the block-partitioned solver running on a simulated mesh of
//!   processing elements.
//! * [`experiment`]: synthetic data, experiment batches, an ALS baseline and
//!   factor-match errors.

pub mod block;
pub mod constraints;
mod error;
pub mod experiment;
pub mod linalg;
pub mod solver;
pub mod tensor;

pub use constraints::ConstraintSpec;
pub use error::{Error, Result};
pub use solver::{fit, FitResult, SolverConfig, SolverState};
pub use tensor::{CooTensor, DenseTensor, KruskalModel, TensorData};
