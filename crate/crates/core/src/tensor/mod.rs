//! Tensor containers, unfoldings, Khatri-Rao algebra, MTTKRP and error metrics.

mod algebra;
mod dense;
pub mod io;
mod model;
mod mttkrp;
mod sparse;

pub use algebra::{frobenius, gram, gram_hadamard, kr, kr_except};
pub use dense::{DenseTensor, MAX_ORDER};
pub use model::{residual_norm_sq, rfe, KruskalModel};
pub use mttkrp::{mttkrp, mttkrp_sparse, TensorData};
pub use sparse::CooTensor;

pub(crate) use algebra::hadamard_of_grams;
pub(crate) use dense::check_mode;
pub use dense::check_dims;
pub(crate) use mttkrp::mttkrp_dense_raw;
