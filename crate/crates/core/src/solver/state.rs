use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraints::ConstraintSpec;
use crate::error::{Error, Result};
use crate::tensor::{frobenius, KruskalModel};

use super::SolverConfig;

/// Full ADMM state: per mode a factor, its auxiliary (constrained) copy, the
/// dual variable and the penalty parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub factors: Vec<Array2<f64>>,
    pub aux: Vec<Array2<f64>>,
    pub duals: Vec<Array2<f64>>,
    pub penalties: Vec<f64>,
    pub iter: usize,
}

impl SolverState {
    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn rank(&self) -> usize {
        self.factors[0].ncols()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|u| u.nrows()).collect()
    }

    /// Model built from the auxiliary copies, which are always feasible.
    pub fn aux_model(&self) -> KruskalModel {
        KruskalModel::new(self.aux.clone()).expect("aux shapes validated at init")
    }

    pub fn factor_model(&self) -> KruskalModel {
        KruskalModel::new(self.factors.clone()).expect("factor shapes validated at init")
    }

    pub fn check_shapes(&self) -> Result<()> {
        let n = self.order();
        if self.aux.len() != n || self.duals.len() != n || self.penalties.len() != n {
            return Err(Error::DimensionMismatch("state vectors disagree on the order".into()));
        }
        if self.factors.iter().any(|u| u.ncols() != self.factors[0].ncols()) {
            return Err(Error::DimensionMismatch("factors disagree on the rank".into()));
        }
        for m in 0..n {
            let shape = self.factors[m].dim();
            if self.aux[m].dim() != shape || self.duals[m].dim() != shape {
                return Err(Error::DimensionMismatch(format!("mode {m} factor/aux/dual shapes differ")));
            }
            if !(self.penalties[m] > 0.0) {
                return Err(Error::InvalidPenalty(self.penalties[m]));
            }
        }
        Ok(())
    }
}

/// Initial state: every factor but the first is i.i.d. uniform on `[0, 1)`
/// from `config.seed`; the first factor is computed by the first update and
/// starts at zero, as do all auxiliary and dual variables.
pub fn init_state(
    dims: &[usize],
    rank: usize,
    specs: &[ConstraintSpec],
    config: &SolverConfig,
) -> Result<SolverState> {
    crate::tensor::check_dims(dims)?;
    if rank == 0 {
        return Err(Error::Config("rank must be at least 1".into()));
    }
    if specs.len() != dims.len() {
        return Err(Error::Config(format!(
            "{} constraint specs for an order-{} tensor",
            specs.len(),
            dims.len()
        )));
    }
    for (spec, &d) in specs.iter().zip(dims) {
        spec.validate_for(d, rank)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let factors = dims
        .iter()
        .enumerate()
        .map(|(m, &d)| {
            if m == 0 {
                Array2::zeros((d, rank))
            } else {
                Array2::from_shape_simple_fn((d, rank), || rng.gen::<f64>())
            }
        })
        .collect();
    let zeros: Vec<_> = dims.iter().map(|&d| Array2::zeros((d, rank))).collect();
    Ok(SolverState {
        factors,
        aux: zeros.clone(),
        duals: zeros,
        penalties: vec![config.rho_init; dims.len()],
        iter: 0,
    })
}

/// Per-mode primal and dual residual norms.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    /// `‖U − Ũ‖_F`
    pub primal: Vec<f64>,
    /// `ρ ‖Ũ^k − Ũ^{k−1}‖_F`
    pub dual: Vec<f64>,
}

impl Residuals {
    pub fn zeros(order: usize) -> Self {
        Self {
            primal: vec![0.0; order],
            dual: vec![0.0; order],
        }
    }
}

pub(crate) fn diff_norm(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub(crate) fn norm(a: &Array2<f64>) -> f64 {
    frobenius(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_in_range() {
        let cfg = SolverConfig { seed: 9, ..Default::default() };
        let specs = [ConstraintSpec::NonNegative; 3];
        let a = init_state(&[3, 4, 5], 2, &specs, &cfg).unwrap();
        let b = init_state(&[3, 4, 5], 2, &specs, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.factors[1].iter().chain(a.factors[2].iter()).all(|&v| (0.0..=1.0).contains(&v)));
        assert!(a.duals.iter().all(|y| norm(y) == 0.0));
        assert!(a.aux.iter().all(|y| norm(y) == 0.0));
        assert_eq!(a.penalties, vec![1.0; 3]);
        let c = init_state(&[3, 4, 5], 2, &specs, &SolverConfig { seed: 10, ..Default::default() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_validates() {
        let cfg = SolverConfig::default();
        let specs = [ConstraintSpec::NonNegative; 3];
        assert!(init_state(&[3, 4, 5], 0, &specs, &cfg).is_err());
        assert!(init_state(&[3, 4], 2, &specs[..2], &cfg).is_err());
        assert!(init_state(&[3, 4, 5], 2, &specs[..2], &cfg).is_err());
        let card = [ConstraintSpec::NonNegativeCardinality(7), ConstraintSpec::NonNegative, ConstraintSpec::NonNegative];
        assert!(init_state(&[3, 4, 5], 2, &card, &cfg).is_err());
    }
}
