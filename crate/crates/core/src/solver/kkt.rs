//! First-order optimality check for the non-negative factorization problem.

use ndarray::Array2;

use crate::constraints::ConstraintSpec;
use crate::error::Result;
use crate::tensor::TensorData;

use super::state::{diff_norm, norm, SolverState};
use super::update::state_gram;

/// KKT residual norms of a state. All are zero at a KKT point of the
/// non-negatively constrained problem:
///
/// * stationarity: `(X^(m) − U_m K_mᵀ) K_m − Y_m = 0` per mode,
/// * feasibility: `U_m − Ũ_m = 0` per mode,
/// * dual sign: `Y_m ≤ 0`,
/// * complementarity: `Y_m ⊛ Ũ_m = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct KktResiduals {
    pub stationarity: Vec<f64>,
    pub feasibility: Vec<f64>,
    pub max_positive_dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn named(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for (m, &s) in self.stationarity.iter().enumerate() {
            out.push((format!("stationarity.mode{}", m + 1), s));
        }
        for (m, &f) in self.feasibility.iter().enumerate() {
            out.push((format!("feasibility.mode{}", m + 1), f));
        }
        out.push(("max_positive_dual".into(), self.max_positive_dual));
        out.push(("complementarity".into(), self.complementarity));
        out
    }

    pub fn max(&self) -> f64 {
        self.named().into_iter().map(|(_, v)| v).fold(0.0, f64::max)
    }
}

/// Evaluates the KKT conditions at the state's factors. For row-stochastic
/// modes the row-constant part of the stationarity residual is removed, as
/// it is absorbed by the multipliers of the row-sum constraints.
pub fn kkt_residuals<T: TensorData + ?Sized>(
    state: &SolverState,
    t: &T,
    specs: &[ConstraintSpec],
) -> Result<KktResiduals> {
    let views: Vec<_> = state.factors.iter().map(|u| u.view()).collect();
    let mut stationarity = Vec::with_capacity(state.order());
    for m in 0..state.order() {
        let mut s: Array2<f64> = t.mttkrp_views(&views, m)?;
        s -= &state.factors[m].dot(&state_gram(state, m));
        s -= &state.duals[m];
        if specs.get(m) == Some(&ConstraintSpec::RowStochastic) {
            for mut row in s.rows_mut() {
                let mean = row.mean().unwrap_or(0.0);
                row.mapv_inplace(|v| v - mean);
            }
        }
        stationarity.push(norm(&s));
    }
    let feasibility = (0..state.order())
        .map(|m| diff_norm(&state.factors[m], &state.aux[m]))
        .collect();
    let max_positive_dual = state
        .duals
        .iter()
        .flat_map(|y| y.iter())
        .fold(0.0f64, |acc, &v| acc.max(v));
    let complementarity = state
        .duals
        .iter()
        .zip(&state.aux)
        .flat_map(|(y, a)| y.iter().zip(a.iter()).map(|(y, a)| (y * a) * (y * a)))
        .sum::<f64>()
        .sqrt();
    Ok(KktResiduals {
        stationarity,
        feasibility,
        max_positive_dual,
        complementarity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{DenseTensor, KruskalModel};
    use ndarray::array;

    #[test]
    fn exact_rank_one_point() {
        let factors = vec![array![[1.0], [2.0]], array![[1.0], [0.5], [3.0]], array![[2.0], [1.0]]];
        let t: DenseTensor = KruskalModel::new(factors.clone()).unwrap().reconstruct();
        let state = SolverState {
            aux: factors.clone(),
            duals: factors.iter().map(|u| Array2::zeros(u.dim())).collect(),
            factors,
            penalties: vec![1.0; 3],
            iter: 0,
        };
        let k = kkt_residuals(&state, &t, &[ConstraintSpec::NonNegative; 3]).unwrap();
        assert_eq!(k.named().len(), 8);
        assert!(k.max() < 1e-12, "{k:?}");
    }

    #[test]
    fn random_state_is_not_stationary() {
        let t = DenseTensor::from_fn(vec![2, 3, 2], |i| (i[0] + i[1] * i[2]) as f64 + 1.0).unwrap();
        let f = |r: usize, s: f64| Array2::from_shape_fn((r, 2), |(i, j)| s + (i * 2 + j) as f64 * 0.1);
        let state = SolverState {
            factors: vec![f(2, 0.1), f(3, 0.2), f(2, 0.3)],
            aux: vec![f(2, 0.1), f(3, 0.2), f(2, 0.3)],
            duals: vec![Array2::zeros((2, 2)), Array2::zeros((3, 2)), Array2::zeros((2, 2))],
            penalties: vec![1.0; 3],
            iter: 0,
        };
        let k = kkt_residuals(&state, &t, &[ConstraintSpec::NonNegative; 3]).unwrap();
        assert!(k.stationarity.iter().all(|&s| s > 1e-3));
    }
}
