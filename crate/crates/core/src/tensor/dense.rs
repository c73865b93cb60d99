use std::ops::Range;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Largest supported tensor order.
pub const MAX_ORDER: usize = 4;

pub fn check_dims(dims: &[usize]) -> Result<()> {
    if !(3..=MAX_ORDER).contains(&dims.len()) {
        return Err(Error::UnsupportedOrder(dims.len()));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::InvalidDims {
            dims: dims.to_vec(),
            reason: "every extent must be at least 1".into(),
        });
    }
    Ok(())
}

pub(crate) fn check_mode(mode: usize, order: usize) -> Result<()> {
    if mode >= order {
        return Err(Error::ModeOutOfRange { mode, order });
    }
    Ok(())
}

/// Column strides of the mode-`mode` unfolding: the lowest remaining mode
/// varies fastest.
pub(crate) fn unfolding_strides(dims: &[usize], mode: usize) -> Vec<usize> {
    let mut strides = vec![0; dims.len()];
    let mut s = 1;
    for (n, &d) in dims.iter().enumerate() {
        if n != mode {
            strides[n] = s;
            s *= d;
        }
    }
    strides
}

/// Advances a row-major multi-index; returns false after the last index.
pub(crate) fn next_index(idx: &mut [usize], dims: &[usize]) -> bool {
    for n in (0..dims.len()).rev() {
        idx[n] += 1;
        if idx[n] < dims[n] {
            return true;
        }
        idx[n] = 0;
    }
    false
}

/// Dense real tensor of order 3 or 4, stored row-major (last index fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    values: Vec<f64>,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        check_dims(&dims)?;
        let len: usize = dims.iter().product();
        if values.len() != len {
            return Err(Error::InvalidDims {
                dims,
                reason: format!("expected {len} values, got {}", values.len()),
            });
        }
        Ok(Self { dims, values })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let len = dims.iter().product();
        Self::new(dims, vec![0.0; len])
    }

    /// Builds a tensor by evaluating `f` at every multi-index in row-major order.
    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        check_dims(&dims)?;
        let len: usize = dims.iter().product();
        let mut values = Vec::with_capacity(len);
        let mut idx = vec![0; dims.len()];
        loop {
            values.push(f(&idx));
            if !next_index(&mut idx, &dims) {
                break;
            }
        }
        Ok(Self { dims, values })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        idx.iter()
            .zip(&self.dims)
            .fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.values[self.linear_index(idx)]
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Mode-`mode` unfolding (zero-based mode). Element `(i_1, ..., i_N)` lands
    /// in row `i_mode` and column `sum_{n != mode} i_n * prod_{m < n, m != mode} dims[m]`,
    /// so for a third-order tensor the mode-0 column of `(i, j, k)` is `j + k * J`.
    pub fn unfold(&self, mode: usize) -> Result<Array2<f64>> {
        check_mode(mode, self.order())?;
        let rows = self.dims[mode];
        let cols = self.len() / rows;
        let strides = unfolding_strides(&self.dims, mode);
        let mut out = Array2::zeros((rows, cols));
        let mut idx = vec![0; self.order()];
        for &v in &self.values {
            let col: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
            out[[idx[mode], col]] = v;
            next_index(&mut idx, &self.dims);
        }
        Ok(out)
    }

    /// Inverse of [`DenseTensor::unfold`].
    pub fn fold(matrix: &Array2<f64>, mode: usize, dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        check_mode(mode, dims.len())?;
        let len: usize = dims.iter().product();
        if matrix.nrows() != dims[mode] || matrix.nrows() * matrix.ncols() != len {
            return Err(Error::DimensionMismatch(format!(
                "cannot fold a {}x{} matrix along mode {mode} into {dims:?}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let strides = unfolding_strides(dims, mode);
        Self::from_fn(dims.to_vec(), |idx| {
            let col: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
            matrix[[idx[mode], col]]
        })
    }

    /// Copies out the sub-tensor spanned by one index range per mode.
    pub fn sub_box(&self, ranges: &[Range<usize>]) -> Result<Self> {
        if ranges.len() != self.order() {
            return Err(Error::DimensionMismatch(format!(
                "{} ranges for an order-{} tensor",
                ranges.len(),
                self.order()
            )));
        }
        for (r, &d) in ranges.iter().zip(&self.dims) {
            if r.start >= r.end || r.end > d {
                return Err(Error::DimensionMismatch(format!(
                    "range {r:?} invalid for extent {d}"
                )));
            }
        }
        let sub_dims: Vec<usize> = ranges.iter().map(|r| r.len()).collect();
        let mut full = vec![0; self.order()];
        Self::from_fn(sub_dims, |idx| {
            for (n, r) in ranges.iter().enumerate() {
                full[n] = r.start + idx[n];
            }
            self.get(&full)
        })
    }
}

impl std::ops::Add<&DenseTensor> for &DenseTensor {
    type Output = DenseTensor;

    fn add(self, rhs: &DenseTensor) -> DenseTensor {
        assert_eq!(self.dims, rhs.dims, "tensor shapes differ");
        DenseTensor {
            dims: self.dims.clone(),
            values: self
                .values
                .iter()
                .zip(&rhs.values)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}
