//! Benchmark fixtures shared by the criterion targets.

use ntf_core::experiment::generate;
use ntf_core::solver::{init_state, SolverState};
use ntf_core::{ConstraintSpec, DenseTensor, SolverConfig};

/// A noisy rank-`rank` cube of side `n` and a solver state initialized on it.
pub fn fixture(n: usize, rank: usize) -> (DenseTensor, SolverState) {
    let (t, _) = generate(&[n, n, n], rank, 1e-2, 7).expect("valid fixture");
    let state = init_state(t.dims(), rank, &[ConstraintSpec::NonNegative; 3], &SolverConfig::default())
        .expect("valid fixture");
    (t, state)
}
