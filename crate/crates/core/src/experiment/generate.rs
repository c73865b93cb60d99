use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{check_dims, DenseTensor, KruskalModel};

/// Synthetic instance: factors with i.i.d. `U[0,1]` entries (mode by mode,
/// row-major) and additive i.i.d. `N(0, σ²)` noise, all drawn from one
/// seeded stream.
pub fn generate(dims: &[usize], rank: usize, sigma2: f64, seed: u64) -> Result<(DenseTensor, KruskalModel)> {
    check_dims(dims)?;
    if rank == 0 {
        return Err(Error::Config("rank must be at least 1".into()));
    }
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(Error::Config(format!("noise variance must be non-negative, got {sigma2}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factors = dims
        .iter()
        .map(|&d| Array2::from_shape_simple_fn((d, rank), || rng.gen::<f64>()))
        .collect();
    let truth = KruskalModel::new(factors)?;
    let mut t = truth.reconstruct();
    if sigma2 > 0.0 {
        let noise = Normal::new(0.0, sigma2.sqrt()).expect("finite positive deviation");
        for v in t.values_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    Ok((t, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::rfe;

    #[test]
    fn noiseless_matches_truth() {
        let (t, truth) = generate(&[4, 5, 6], 2, 0.0, 1).unwrap();
        assert_eq!(rfe(&t, &truth).unwrap(), 0.0);
        assert!(truth.factors().iter().all(|u| u.iter().all(|&v| (0.0..1.0).contains(&v))));
    }

    #[test]
    fn deterministic_in_seed() {
        assert_eq!(generate(&[3, 3, 3], 2, 0.1, 5).unwrap(), generate(&[3, 3, 3], 2, 0.1, 5).unwrap());
        assert_ne!(generate(&[3, 3, 3], 2, 0.1, 5).unwrap().0, generate(&[3, 3, 3], 2, 0.1, 6).unwrap().0);
    }

    #[test]
    fn noise_energy_concentrates() {
        // ‖E‖² / σ² is chi-square with 50³ degrees of freedom: relative sd ≈ 0.4%
        let (t, truth) = generate(&[50, 50, 50], 3, 1e-2, 11).unwrap();
        let clean = truth.reconstruct();
        let e2: f64 = t.values().iter().zip(clean.values()).map(|(a, b)| (a - b).powi(2)).sum();
        let expected = 1e-2 * 125_000.0;
        assert!((e2 / expected - 1.0).abs() < 0.05, "{e2} vs {expected}");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(generate(&[3, 3, 3], 2, -1.0, 0).is_err());
        assert!(generate(&[3, 3, 3], 0, 0.0, 0).is_err());
        assert!(generate(&[3, 3], 1, 0.0, 0).is_err());
    }
}
