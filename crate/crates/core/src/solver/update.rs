//! The individual ADMM steps.

use ndarray::{Array2, ArrayView2};

use crate::constraints::{project, ConstraintSpec};
use crate::error::Result;
use crate::linalg::factor_penalized;
use crate::tensor::{hadamard_of_grams, TensorData};

use super::state::{diff_norm, norm, Residuals, SolverState};
use super::SolverConfig;

/// Solves `U (G + ρI) = M + ρŨ − Y` for every row of `U`, sharing one
/// Cholesky factorization. For row-stochastic modes each row additionally
/// satisfies `u·1 = 1` through a closed-form Lagrange multiplier.
pub(crate) fn solve_factor_rows(
    mttkrp: &Array2<f64>,
    gram: &Array2<f64>,
    aux: ArrayView2<'_, f64>,
    dual: ArrayView2<'_, f64>,
    rho: f64,
    spec: ConstraintSpec,
) -> Result<Array2<f64>> {
    let chol = factor_penalized(gram, rho)?;
    let mut rhs = mttkrp.clone();
    rhs.zip_mut_with(&aux, |r, &a| *r += rho * a);
    rhs.zip_mut_with(&dual, |r, &y| *r -= y);
    let mut out = chol.solve_rows(&rhs);
    if spec == ConstraintSpec::RowStochastic {
        let mut g_ones = vec![1.0; gram.ncols()];
        chol.solve_in_place(&mut g_ones);
        let denom: f64 = g_ones.iter().sum();
        for mut row in out.rows_mut() {
            let lambda = (1.0 - row.sum()) / denom;
            row.iter_mut().zip(&g_ones).for_each(|(x, g)| *x += lambda * g);
        }
    }
    Ok(out)
}

/// Gram-Hadamard matrix of every factor except `mode`, ascending mode order.
pub(crate) fn state_gram(state: &SolverState, mode: usize) -> Array2<f64> {
    hadamard_of_grams(
        state.rank(),
        state
            .factors
            .iter()
            .enumerate()
            .filter(|(n, _)| *n != mode)
            .map(|(_, u)| u.view()),
    )
}

/// New value of factor `mode` given the current values of the others.
pub fn factor_update<T: TensorData + ?Sized>(
    state: &SolverState,
    t: &T,
    mode: usize,
    spec: ConstraintSpec,
) -> Result<Array2<f64>> {
    let views: Vec<_> = state.factors.iter().map(|u| u.view()).collect();
    let m = t.mttkrp_views(&views, mode)?;
    let g = state_gram(state, mode);
    solve_factor_rows(
        &m,
        &g,
        state.aux[mode].view(),
        state.duals[mode].view(),
        state.penalties[mode],
        spec,
    )
}

/// `Π(U + Y/ρ)` for the given mode.
pub fn aux_update(state: &SolverState, mode: usize, spec: ConstraintSpec) -> Array2<f64> {
    aux_from(&state.factors[mode], &state.duals[mode], state.penalties[mode], spec)
}

pub(crate) fn aux_from(factor: &Array2<f64>, dual: &Array2<f64>, rho: f64, spec: ConstraintSpec) -> Array2<f64> {
    let mut v = factor.clone();
    v.zip_mut_with(dual, |u, &y| *u += y / rho);
    project(&v, spec)
}

/// `Y + ρ(U − Ũ)` for the given mode.
pub fn dual_update(state: &SolverState, mode: usize) -> Array2<f64> {
    dual_from(&state.duals[mode], &state.factors[mode], &state.aux[mode], state.penalties[mode])
}

pub(crate) fn dual_from(dual: &Array2<f64>, factor: &Array2<f64>, aux: &Array2<f64>, rho: f64) -> Array2<f64> {
    let mut y = dual.clone();
    ndarray::Zip::from(&mut y)
        .and(factor)
        .and(aux)
        .for_each(|y, &u, &a| *y += rho * (u - a));
    debug_assert!(y.iter().zip(dual).zip(factor.iter().zip(aux)).all(|((&new, &old), (&u, &a))| {
        let step = rho * (u - a);
        ((new - old) - step).abs() <= 4.0 * f64::EPSILON * new.abs().max(old.abs()).max(step.abs())
    }));
    y
}

/// Primal residuals `‖U − Ũ‖` and dual residuals `ρ‖Ũ − Ũ_prev‖`.
pub fn residuals(state: &SolverState, prev_aux: &[Array2<f64>]) -> Residuals {
    let n = state.order();
    Residuals {
        primal: (0..n).map(|m| diff_norm(&state.factors[m], &state.aux[m])).collect(),
        dual: (0..n)
            .map(|m| state.penalties[m] * diff_norm(&state.aux[m], &prev_aux[m]))
            .collect(),
    }
}

/// True iff for every mode
/// `‖P‖ ≤ √(I F) ε_abs + ε_rel max(‖U‖, ‖Ũ‖)` and `‖D‖ ≤ √(I F) ε_abs + ε_rel ‖Y‖`.
pub fn check_stop(res: &Residuals, state: &SolverState, config: &SolverConfig) -> bool {
    (0..state.order()).all(|m| {
        let (rows, cols) = state.factors[m].dim();
        let abs = ((rows * cols) as f64).sqrt() * config.eps_abs;
        let primal_tol = abs + config.eps_rel * norm(&state.factors[m]).max(norm(&state.aux[m]));
        let dual_tol = abs + config.eps_rel * norm(&state.duals[m]);
        res.primal[m] <= primal_tol && res.dual[m] <= dual_tol
    })
}

/// Residual balancing: `ρ·τ_incr` if `‖P‖ > μ‖D‖`, `ρ/τ_decr` if
/// `‖D‖ > μ‖P‖`, otherwise unchanged. Duals are not rescaled.
pub fn adapt_penalties(penalties: &[f64], res: &Residuals, config: &SolverConfig) -> Vec<f64> {
    penalties
        .iter()
        .zip(res.primal.iter().zip(&res.dual))
        .map(|(&rho, (&p, &d))| {
            if p > config.mu * d {
                rho * config.tau_incr
            } else if d > config.mu * p {
                rho / config.tau_decr
            } else {
                rho
            }
        })
        .collect()
}

/// One ADMM iteration: `inner_sweeps` Gauss-Seidel factor sweeps in mode
/// order, then the auxiliary and dual updates, then the residuals.
pub fn iterate<T: TensorData + ?Sized>(
    state: &mut SolverState,
    t: &T,
    specs: &[ConstraintSpec],
    config: &SolverConfig,
) -> Result<Residuals> {
    let prev_aux = state.aux.clone();
    for _ in 0..config.inner_sweeps {
        for m in 0..state.order() {
            state.factors[m] = factor_update(state, t, m, specs[m])?;
        }
    }
    for m in 0..state.order() {
        state.aux[m] = aux_update(state, m, specs[m]);
        state.duals[m] = dual_update(state, m);
    }
    state.iter += 1;
    Ok(residuals(state, &prev_aux))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DenseTensor;
    use ndarray::array;

    fn scalar_state() -> (SolverState, DenseTensor) {
        let state = SolverState {
            factors: vec![array![[0.0]], array![[1.0]], array![[1.0]]],
            aux: vec![array![[0.0]]; 3],
            duals: vec![array![[0.0]]; 3],
            penalties: vec![1.0; 3],
            iter: 0,
        };
        (state, DenseTensor::new(vec![1, 1, 1], vec![2.0]).unwrap())
    }

    #[test]
    fn scalar_factor_update() {
        // (2 + 0) / (1 + 1)
        let (state, t) = scalar_state();
        let a = factor_update(&state, &t, 0, ConstraintSpec::NonNegative).unwrap();
        assert!((a[[0, 0]] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scalar_iteration_trajectory() {
        // Hand evaluation with X = 2, B = C = 1, ρ = 1, zero aux/duals:
        // A = 2/2 = 1; B = (2·1)/(1+1) = 1; C = 1; aux = 1; duals = 0.
        let (mut state, t) = scalar_state();
        let close = |a: f64, b: f64| (a - b).abs() < 1e-14;
        let res = iterate(&mut state, &t, &[ConstraintSpec::NonNegative; 3], &SolverConfig::default()).unwrap();
        for m in 0..3 {
            assert!(close(state.factors[m][[0, 0]], 1.0));
            assert!(close(state.aux[m][[0, 0]], 1.0));
            assert!(close(state.duals[m][[0, 0]], 0.0));
            assert!(close(res.primal[m], 0.0));
            assert!(close(res.dual[m], 1.0));
        }
        // second iteration: A = (2 + 1)/(1 + 1) = 1.5
        iterate(&mut state, &t, &[ConstraintSpec::NonNegative; 3], &SolverConfig::default()).unwrap();
        assert!(close(state.factors[0][[0, 0]], 1.5));
        assert_eq!(state.iter, 2);
    }

    #[test]
    fn invalid_penalty_is_an_error() {
        let (mut state, t) = scalar_state();
        state.penalties[0] = 0.0;
        assert!(matches!(
            factor_update(&state, &t, 0, ConstraintSpec::NonNegative),
            Err(crate::Error::InvalidPenalty(_))
        ));
    }

    #[test]
    fn aux_and_dual_updates() {
        let mut state = SolverState {
            factors: vec![array![[-1.0, 2.0]]; 3],
            aux: vec![array![[0.0, 0.0]]; 3],
            duals: vec![array![[0.0, 0.0]]; 3],
            penalties: vec![1.0, 2.0, 1.0],
            iter: 0,
        };
        assert_eq!(aux_update(&state, 0, ConstraintSpec::NonNegative), array![[0.0, 2.0]]);
        state.aux[1] = array![[-2.0, 2.0]];
        assert_eq!(dual_update(&state, 1), array![[2.0, 0.0]]);
        state.aux[2] = state.factors[2].clone();
        assert_eq!(dual_update(&state, 2), state.duals[2]);

        let feasible = array![[0.5, 0.5], [0.2, 0.8]];
        let s = SolverState {
            factors: vec![feasible.clone()],
            aux: vec![feasible.clone()],
            duals: vec![Array2::zeros((2, 2))],
            penalties: vec![1.0],
            iter: 0,
        };
        assert_eq!(aux_update(&s, 0, ConstraintSpec::NonNegative), feasible);
        let rs = aux_update(&SolverState { factors: vec![array![[0.3, 0.9], [2.0, -1.0]]], ..s }, 0, ConstraintSpec::RowStochastic);
        for r in rs.rows() {
            assert!((r.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_cases() {
        let mut state = SolverState {
            factors: vec![array![[3.0, 4.0]]],
            aux: vec![array![[0.0, 0.0]]],
            duals: vec![array![[0.0, 0.0]]],
            penalties: vec![1.0],
            iter: 1,
        };
        let prev = vec![array![[0.0, 0.0]]];
        let r = residuals(&state, &prev);
        assert_eq!(r.primal, vec![5.0]);
        assert_eq!(r.dual, vec![0.0]);

        state.aux[0] = array![[1.0, 0.0]];
        let d1 = residuals(&state, &prev).dual[0];
        state.penalties[0] = 2.0;
        assert_eq!(residuals(&state, &prev).dual[0], 2.0 * d1);

        state.factors[0] = state.aux[0].clone();
        let same = residuals(&state, &state.aux.clone());
        assert_eq!((same.primal[0], same.dual[0]), (0.0, 0.0));
    }

    fn stop_state() -> SolverState {
        SolverState {
            factors: vec![Array2::zeros((4, 2)); 3],
            aux: vec![Array2::zeros((4, 2)); 3],
            duals: vec![Array2::zeros((4, 2)); 3],
            penalties: vec![1.0; 3],
            iter: 1,
        }
    }

    #[test]
    fn stopping_boundaries() {
        let cfg = SolverConfig::default();
        let state = stop_state();
        assert!(check_stop(&Residuals::zeros(3), &state, &cfg));

        let threshold = (8.0f64).sqrt() * cfg.eps_abs;
        let mut res = Residuals::zeros(3);
        res.primal[0] = threshold;
        assert!(check_stop(&res, &state, &cfg), "inclusive boundary");
        res.primal[0] = threshold * (1.0 + 1e-12);
        assert!(!check_stop(&res, &state, &cfg));

        let mut res = Residuals::zeros(3);
        res.dual[2] = 2.0 * threshold;
        assert!(!check_stop(&res, &state, &cfg));
    }

    #[test]
    fn stopping_relative_terms() {
        let cfg = SolverConfig::default();
        let mut state = stop_state();
        state.factors[0].fill(1.0); // ‖A‖ = √8
        state.duals[1].fill(2.0); // ‖Y_B‖ = 2√8
        let abs = (8.0f64).sqrt() * cfg.eps_abs;
        let mut res = Residuals::zeros(3);
        res.primal[0] = abs + cfg.eps_rel * (8.0f64).sqrt();
        res.dual[1] = abs + cfg.eps_rel * 2.0 * (8.0f64).sqrt();
        assert!(check_stop(&res, &state, &cfg));
        res.dual[1] *= 1.001;
        assert!(!check_stop(&res, &state, &cfg));
    }

    #[test]
    fn penalty_rule_three_branches() {
        let cfg = SolverConfig::default();
        let res = Residuals {
            primal: vec![10.0, 1.0, 3.0],
            dual: vec![1.0, 10.0, 3.0],
        };
        assert_eq!(adapt_penalties(&[1.0, 1.0, 1.0], &res, &cfg), vec![4.0, 0.5, 1.0]);
        // strict inequalities: exactly μ‖D‖ keeps ρ
        let edge = Residuals { primal: vec![8.0], dual: vec![1.0] };
        assert_eq!(adapt_penalties(&[1.0], &edge, &cfg), vec![1.0]);
    }
}
