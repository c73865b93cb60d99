use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

use super::algebra::row_major;
use super::dense::{check_dims, DenseTensor};

/// CP model `[U_1, ..., U_N]`: one factor matrix per mode, all with `F` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct KruskalModel {
    factors: Vec<Array2<f64>>,
}

impl KruskalModel {
    pub fn new(factors: Vec<Array2<f64>>) -> Result<Self> {
        let dims: Vec<usize> = factors.iter().map(|u| u.nrows()).collect();
        check_dims(&dims)?;
        let rank = factors[0].ncols();
        if rank == 0 {
            return Err(Error::DimensionMismatch("factor matrices need at least one column".into()));
        }
        if let Some((n, u)) = factors.iter().enumerate().find(|(_, u)| u.ncols() != rank) {
            return Err(Error::DimensionMismatch(format!(
                "factor {n} has {} columns, factor 0 has {rank}",
                u.ncols()
            )));
        }
        if let Some(n) = factors.iter().position(|u| u.iter().any(|v| !v.is_finite())) {
            return Err(Error::DimensionMismatch(format!("factor {n} has non-finite entries")));
        }
        Ok(Self { factors })
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn rank(&self) -> usize {
        self.factors[0].ncols()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|u| u.nrows()).collect()
    }

    pub fn factors(&self) -> &[Array2<f64>] {
        &self.factors
    }

    pub fn factor(&self, mode: usize) -> &Array2<f64> {
        &self.factors[mode]
    }

    pub fn into_factors(self) -> Vec<Array2<f64>> {
        self.factors
    }

    pub(crate) fn views(&self) -> Vec<ArrayView2<'_, f64>> {
        self.factors.iter().map(|u| u.view()).collect()
    }

    /// Dense tensor `sum_f u_1f ∘ ... ∘ u_Nf`.
    pub fn reconstruct(&self) -> DenseTensor {
        let dims = self.dims();
        let mut values = Vec::with_capacity(dims.iter().product());
        for_each_fiber(&self.views(), |w, last| {
            for row in last.chunks_exact(w.len()) {
                values.push(w.iter().zip(row).map(|(a, b)| a * b).sum());
            }
        });
        DenseTensor::new(dims, values).expect("model dims validated")
    }

    pub(crate) fn check_matches(&self, dims: &[usize]) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::DimensionMismatch(format!(
                "model dims {:?} do not match tensor dims {dims:?}",
                self.dims()
            )));
        }
        Ok(())
    }
}

/// Walks the mode-N fibers in row-major order. For each fiber, `visit` gets the
/// elementwise product of the leading factors' rows (modes `0..N-1`, in
/// ascending order) and the full last factor.
fn for_each_fiber(factors: &[ArrayView2<'_, f64>], mut visit: impl FnMut(&[f64], &[f64])) {
    let order = factors.len();
    let rank = factors[0].ncols();
    let data: Vec<_> = factors.iter().map(row_major).collect();
    let lead_dims: Vec<usize> = factors[..order - 1].iter().map(|u| u.nrows()).collect();
    let mut idx = vec![0; order - 1];
    let mut w = vec![0.0; rank];
    loop {
        w.copy_from_slice(&data[0][idx[0] * rank..(idx[0] + 1) * rank]);
        for n in 1..order - 1 {
            let row = &data[n][idx[n] * rank..(idx[n] + 1) * rank];
            w.iter_mut().zip(row).for_each(|(a, b)| *a *= b);
        }
        visit(&w, &data[order - 1]);
        if !super::dense::next_index(&mut idx, &lead_dims) {
            break;
        }
    }
}

/// `‖X − M‖_F²`, without materializing the model tensor.
pub fn residual_norm_sq(t: &DenseTensor, model: &KruskalModel) -> Result<f64> {
    model.check_matches(t.dims())?;
    let mut values = t.values().chunks_exact(*t.dims().last().unwrap());
    let mut acc = 0.0;
    for_each_fiber(&model.views(), |w, last| {
        let fiber = values.next().expect("fiber count matches dims");
        for (x, row) in fiber.iter().zip(last.chunks_exact(w.len())) {
            let m: f64 = w.iter().zip(row).map(|(a, b)| a * b).sum();
            acc += (x - m) * (x - m);
        }
    });
    Ok(acc)
}

/// Relative factorization error `‖X − M‖_F / ‖X‖_F`.
pub fn rfe(t: &DenseTensor, model: &KruskalModel) -> Result<f64> {
    let norm = t.norm();
    if norm == 0.0 {
        return Err(Error::ZeroTensor);
    }
    Ok(residual_norm_sq(t, model)?.sqrt() / norm)
}
