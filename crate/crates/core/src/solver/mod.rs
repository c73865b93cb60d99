//! Centralized ADMM solver for constrained CP factorization.
//!
//! Each iteration runs Gauss-Seidel least-squares updates of the factors
//! (penalized toward their auxiliary copies), projects `factor + dual/ρ` onto
//! the constraint set to get the new auxiliary copies, and takes a dual
//! ascent step. Stopping uses primal/dual residual tests and the penalties
//! adapt by residual balancing.

mod config;
mod fit;
mod kkt;
mod state;
mod update;

pub use config::{restart_seed, SolverConfig};
pub use fit::{fit, fit_with_engine, CentralizedEngine, Engine, FitResult};
pub use kkt::{kkt_residuals, KktResiduals};
pub use state::{init_state, Residuals, SolverState};
pub use update::{adapt_penalties, aux_update, check_stop, dual_update, factor_update, iterate, residuals};

pub(crate) use fit::check_fit_inputs;
pub(crate) use update::{aux_from, dual_from, solve_factor_rows};
