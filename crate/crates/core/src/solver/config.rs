use crate::error::{Error, Result};

/// Solver parameters. Defaults follow the synthetic-benchmark settings:
/// `ε_abs = ε_rel = 1e-4`, `ρ = 1`, `μ = 8`, `τ_incr = 4`, `τ_decr = 2`,
/// at most 400 iterations per attempt and one factor sweep per iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub mu: f64,
    pub tau_incr: f64,
    pub tau_decr: f64,
    pub rho_init: f64,
    /// Iterations per attempt before restarting.
    pub n_max: usize,
    /// Restarts after the first attempt.
    pub max_restarts: usize,
    /// Gauss-Seidel factor sweeps per outer iteration.
    pub inner_sweeps: usize,
    pub seed: u64,
    /// When false the penalties stay at `rho_init`.
    pub adapt_penalties: bool,
    /// Record the RFE of the auxiliary model after every iteration.
    pub record_rfe: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_abs: 1e-4,
            eps_rel: 1e-4,
            mu: 8.0,
            tau_incr: 4.0,
            tau_decr: 2.0,
            rho_init: 1.0,
            n_max: 400,
            max_restarts: 10,
            inner_sweeps: 1,
            seed: 0,
            adapt_penalties: true,
            record_rfe: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let tolerances = [("eps_abs", self.eps_abs), ("eps_rel", self.eps_rel)];
        if let Some((name, v)) = tolerances.iter().find(|(_, v)| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
        }
        if !(self.rho_init > 0.0) || !self.rho_init.is_finite() {
            return Err(Error::Config(format!("rho_init must be positive, got {}", self.rho_init)));
        }
        let above_one = [("mu", self.mu), ("tau_incr", self.tau_incr), ("tau_decr", self.tau_decr)];
        if let Some((name, v)) = above_one.iter().find(|(_, v)| !(*v > 1.0) || !v.is_finite()) {
            return Err(Error::Config(format!("{name} must be greater than 1, got {v}")));
        }
        if self.n_max == 0 {
            return Err(Error::Config("n_max must be at least 1".into()));
        }
        if self.inner_sweeps == 0 {
            return Err(Error::Config("inner_sweeps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Seed for attempt `attempt`: the configured seed first, then a
/// SplitMix64-mixed value per restart.
pub fn restart_seed(seed: u64, attempt: usize) -> u64 {
    if attempt == 0 {
        return seed;
    }
    let mut z = seed.wrapping_add((attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
