//! Matricized tensor times Khatri-Rao product, `X^(m) · (⊙_{n≠m} U_n)`,
//! computed without forming the Khatri-Rao product.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

use super::algebra::row_major;
use super::dense::{check_mode, next_index, DenseTensor};
use super::model::KruskalModel;
use super::sparse::CooTensor;

fn check_factors(dims: &[usize], factors: &[ArrayView2<'_, f64>], mode: usize) -> Result<usize> {
    check_mode(mode, dims.len())?;
    if factors.len() != dims.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} factors for an order-{} tensor",
            factors.len(),
            dims.len()
        )));
    }
    let rank = factors[(mode + 1) % dims.len()].ncols();
    for (n, (u, &d)) in factors.iter().zip(dims).enumerate() {
        if n == mode {
            continue;
        }
        if u.nrows() != d || u.ncols() != rank {
            return Err(Error::DimensionMismatch(format!(
                "factor {n} is {}x{}, expected {d}x{rank}",
                u.nrows(),
                u.ncols()
            )));
        }
    }
    Ok(rank)
}

/// Dense MTTKRP over a row-major value buffer with extents `dims`. The entry
/// `factors[mode]` is ignored. Works on any sub-box of a larger tensor as long
/// as the factor views are sliced to the same index ranges.
///
/// Traversal is row-major over the buffer. For each mode-N fiber the last
/// factor is contracted first, then scaled by the remaining rows, so each
/// output row accumulates in a fixed order independent of how it is called.
pub(crate) fn mttkrp_dense_raw(
    values: &[f64],
    dims: &[usize],
    factors: &[ArrayView2<'_, f64>],
    mode: usize,
) -> Result<Array2<f64>> {
    let rank = check_factors(dims, factors, mode)?;
    let order = dims.len();
    let last = order - 1;
    let data: Vec<_> = factors
        .iter()
        .enumerate()
        .map(|(n, u)| if n == mode { Default::default() } else { row_major(u) })
        .collect();
    let lead_dims = &dims[..last];
    let fiber_len = dims[last];
    let mut out = vec![0.0; dims[mode] * rank];
    let mut idx = vec![0; last];
    let mut w = vec![0.0; rank];
    let mut t = vec![0.0; rank];

    for fiber in values.chunks_exact(fiber_len) {
        // w = ∘ of the leading factor rows other than `mode`
        w.iter_mut().for_each(|x| *x = 1.0);
        for n in (0..last).filter(|&n| n != mode) {
            let row = &data[n][idx[n] * rank..(idx[n] + 1) * rank];
            w.iter_mut().zip(row).for_each(|(a, b)| *a *= b);
        }
        if mode == last {
            for (l, &x) in fiber.iter().enumerate() {
                let o = &mut out[l * rank..(l + 1) * rank];
                o.iter_mut().zip(&w).for_each(|(a, b)| *a += x * b);
            }
        } else {
            t.iter_mut().for_each(|x| *x = 0.0);
            for (&x, row) in fiber.iter().zip(data[last].chunks_exact(rank)) {
                t.iter_mut().zip(row).for_each(|(a, b)| *a += x * b);
            }
            let o = &mut out[idx[mode] * rank..(idx[mode] + 1) * rank];
            for ((a, wf), tf) in o.iter_mut().zip(&w).zip(&t) {
                *a += wf * tf;
            }
        }
        next_index(&mut idx, lead_dims);
    }
    Ok(Array2::from_shape_vec((dims[mode], rank), out).expect("shape computed above"))
}

/// Sparse MTTKRP: one pass over the stored entries.
pub(crate) fn mttkrp_sparse_raw(
    t: &CooTensor,
    factors: &[ArrayView2<'_, f64>],
    mode: usize,
) -> Result<Array2<f64>> {
    let rank = check_factors(t.dims(), factors, mode)?;
    let data: Vec<_> = factors
        .iter()
        .enumerate()
        .map(|(n, u)| if n == mode { Default::default() } else { row_major(u) })
        .collect();
    let mut out = vec![0.0; t.dims()[mode] * rank];
    let mut w = vec![0.0; rank];
    for (idx, x) in t.iter() {
        w.iter_mut().for_each(|v| *v = x);
        for n in (0..idx.len()).filter(|&n| n != mode) {
            let row = &data[n][idx[n] * rank..(idx[n] + 1) * rank];
            w.iter_mut().zip(row).for_each(|(a, b)| *a *= b);
        }
        let o = &mut out[idx[mode] * rank..(idx[mode] + 1) * rank];
        o.iter_mut().zip(&w).for_each(|(a, b)| *a += b);
    }
    Ok(Array2::from_shape_vec((t.dims()[mode], rank), out).expect("shape computed above"))
}

/// Tensor storage the solvers can factorize.
pub trait TensorData: Sync {
    fn dims(&self) -> &[usize];

    fn norm(&self) -> f64;

    /// MTTKRP with explicit factor views; `factors[mode]` is ignored.
    fn mttkrp_views(&self, factors: &[ArrayView2<'_, f64>], mode: usize) -> Result<Array2<f64>>;

    /// `‖X − M‖_F²`.
    fn residual_norm_sq(&self, model: &KruskalModel) -> Result<f64>;

    fn mttkrp(&self, model: &KruskalModel, mode: usize) -> Result<Array2<f64>> {
        model.check_matches(self.dims())?;
        self.mttkrp_views(&model.views(), mode)
    }

    fn rfe(&self, model: &KruskalModel) -> Result<f64> {
        let norm = self.norm();
        if norm == 0.0 {
            return Err(Error::ZeroTensor);
        }
        Ok(self.residual_norm_sq(model)?.max(0.0).sqrt() / norm)
    }
}

impl TensorData for DenseTensor {
    fn dims(&self) -> &[usize] {
        DenseTensor::dims(self)
    }

    fn norm(&self) -> f64 {
        DenseTensor::norm(self)
    }

    fn mttkrp_views(&self, factors: &[ArrayView2<'_, f64>], mode: usize) -> Result<Array2<f64>> {
        mttkrp_dense_raw(self.values(), DenseTensor::dims(self), factors, mode)
    }

    fn residual_norm_sq(&self, model: &KruskalModel) -> Result<f64> {
        super::model::residual_norm_sq(self, model)
    }
}

impl TensorData for CooTensor {
    fn dims(&self) -> &[usize] {
        CooTensor::dims(self)
    }

    fn norm(&self) -> f64 {
        CooTensor::norm(self)
    }

    fn mttkrp_views(&self, factors: &[ArrayView2<'_, f64>], mode: usize) -> Result<Array2<f64>> {
        mttkrp_sparse_raw(self, factors, mode)
    }

    /// `‖X‖² − 2⟨X, M⟩ + ‖M‖²`, with `⟨X, M⟩` from one sparse MTTKRP and
    /// `‖M‖²` from the Gram matrices.
    fn residual_norm_sq(&self, model: &KruskalModel) -> Result<f64> {
        model.check_matches(self.dims())?;
        let m = mttkrp_sparse_raw(self, &model.views(), 0)?;
        let inner: f64 = (&m * model.factor(0)).sum();
        let model_sq = super::algebra::hadamard_of_grams(model.rank(), model.views()).sum();
        Ok(self.norm().powi(2) - 2.0 * inner + model_sq)
    }
}

/// Dense-path MTTKRP.
pub fn mttkrp(t: &DenseTensor, model: &KruskalModel, mode: usize) -> Result<Array2<f64>> {
    TensorData::mttkrp(t, model, mode)
}

/// Sparse-path MTTKRP.
pub fn mttkrp_sparse(t: &CooTensor, model: &KruskalModel, mode: usize) -> Result<Array2<f64>> {
    TensorData::mttkrp(t, model, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn ones_factors_sum_rows() {
        let a = [1.0, 2.0];
        let t = DenseTensor::from_fn(vec![2, 2, 2], |i| a[i[0]]).unwrap();
        let model = KruskalModel::new(vec![
            Array2::zeros((2, 1)),
            Array2::ones((2, 1)),
            Array2::ones((2, 1)),
        ])
        .unwrap();
        assert_eq!(mttkrp(&t, &model, 0).unwrap(), array![[4.0], [8.0]]);
        let s = CooTensor::from_dense(&t);
        assert_eq!(mttkrp_sparse(&s, &model, 0).unwrap(), array![[4.0], [8.0]]);
    }

    #[test]
    fn dimension_mismatch() {
        let t = DenseTensor::zeros(vec![2, 3, 4]).unwrap();
        let model = KruskalModel::new(vec![
            Array2::zeros((2, 1)),
            Array2::zeros((2, 1)),
            Array2::zeros((4, 1)),
        ])
        .unwrap();
        assert!(mttkrp(&t, &model, 0).is_err());
    }

    #[test]
    fn sparse_residual_matches_dense() {
        let model = KruskalModel::new(vec![
            array![[1.0, 0.5], [2.0, 0.0]],
            array![[1.0, 1.0], [0.0, 3.0], [1.0, 2.0]],
            array![[0.5, 1.0], [1.0, -1.0]],
        ])
        .unwrap();
        let t = DenseTensor::from_fn(vec![2, 3, 2], |i| if (i[0] + i[1]) % 2 == 0 { 1.0 } else { 0.0 })
            .unwrap();
        let s = CooTensor::from_dense(&t);
        let d = TensorData::residual_norm_sq(&t, &model).unwrap();
        let sp = TensorData::residual_norm_sq(&s, &model).unwrap();
        assert!((d - sp).abs() < 1e-12 * d.max(1.0));
    }
}
