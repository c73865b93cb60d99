use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg::{factor_penalized, Cholesky};
use crate::solver::{check_fit_inputs, init_state, FitResult, SolverConfig, SolverState};
use crate::tensor::{hadamard_of_grams, TensorData};
use crate::ConstraintSpec;

const RIDGE: f64 = 1e-12;

/// Least-squares update of factor `mode` with the others fixed:
/// `M G⁺`, where `G` is the Gram-Hadamard matrix of the other factors.
/// A singular `G` is regularized by `1e-12 I`.
pub fn als_update<T: TensorData + ?Sized>(t: &T, factors: &[Array2<f64>], mode: usize) -> Result<Array2<f64>> {
    let views: Vec<_> = factors.iter().map(|u| u.view()).collect();
    let m = t.mttkrp_views(&views, mode)?;
    let rank = m.ncols();
    let g = hadamard_of_grams(
        rank,
        views.iter().enumerate().filter(|(n, _)| *n != mode).map(|(_, u)| u.view()),
    );
    let chol = match Cholesky::factor(&g) {
        Ok(c) => c,
        Err(Error::NotPositiveDefinite { .. }) => factor_penalized(&g, RIDGE)?,
        Err(e) => return Err(e),
    };
    Ok(chol.solve_rows(&m))
}

/// Plain alternating least squares, started from the same initial point as
/// the constrained solver. Stops once an iteration lowers the relative
/// factorization error by less than a fraction `eps_rel` of its previous
/// value, or after `n_max` iterations.
pub fn als_baseline<T: TensorData + ?Sized>(t: &T, rank: usize, config: &SolverConfig) -> Result<FitResult> {
    let specs = vec![ConstraintSpec::Unconstrained; t.dims().len()];
    check_fit_inputs(t, rank, &specs, config)?;
    let mut state = init_state(t.dims(), rank, &specs, config)?;
    let mut rfe_history = Vec::new();
    let mut prev = f64::INFINITY;
    let mut converged = false;
    let mut rfe = f64::INFINITY;
    while state.iter < config.n_max {
        for m in 0..state.order() {
            state.factors[m] = als_update(t, &state.factors, m)?;
        }
        state.iter += 1;
        rfe = t.rfe(&state.factor_model())?;
        if config.record_rfe {
            rfe_history.push(rfe);
        }
        if prev.is_finite() && prev - rfe <= config.eps_rel * prev {
            converged = true;
            break;
        }
        prev = rfe;
    }
    state.aux = state.factors.clone();
    let model = state.factor_model();
    Ok(FitResult {
        model,
        rfe,
        iterations: state.iter,
        restarts: 0,
        converged,
        residual_history: Vec::new(),
        rfe_history,
        state: SolverState { ..state },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::generate;
    use crate::solver::{factor_update, init_state};

    #[test]
    fn recovers_noiseless_low_rank() {
        let (t, _) = generate(&[8, 7, 6], 2, 0.0, 3).unwrap();
        let cfg = SolverConfig { n_max: 2000, seed: 1, ..Default::default() };
        let r = als_baseline(&t, 2, &cfg).unwrap();
        assert!(r.rfe <= 1e-6, "{}", r.rfe);
    }

    #[test]
    fn matches_vanishing_penalty_update() {
        let (t, _) = generate(&[5, 4, 6], 3, 1e-2, 8).unwrap();
        let specs = [ConstraintSpec::NonNegative; 3];
        let mut state = init_state(t.dims(), 3, &specs, &SolverConfig { seed: 4, ..Default::default() }).unwrap();
        state.penalties = vec![1e-13; 3];
        for m in 0..3 {
            let admm = factor_update(&state, &t, m, ConstraintSpec::Unconstrained).unwrap();
            let als = als_update(&t, &state.factors, m).unwrap();
            let err = (&admm - &als).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
            assert!(err <= 1e-8 * als.mapv(f64::abs).fold(1.0f64, |a, &b| a.max(b)), "mode {m}: {err}");
            state.factors[m] = als;
        }
    }

    #[test]
    fn singular_gram_uses_ridge() {
        let t = crate::DenseTensor::from_fn(vec![3, 3, 3], |i| (i[0] + 1) as f64).unwrap();
        let factors = vec![Array2::zeros((3, 2)), Array2::ones((3, 2)), Array2::ones((3, 2))];
        let u = als_update(&t, &factors, 0).unwrap();
        assert!(u.iter().all(|v| v.is_finite()));
    }
}
