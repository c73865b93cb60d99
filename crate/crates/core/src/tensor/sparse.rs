use crate::error::{Error, Result};

use super::dense::{check_dims, DenseTensor};

/// Sparse tensor in coordinate form. Entries are kept in strictly increasing
/// lexicographic index order so iteration is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct CooTensor {
    dims: Vec<usize>,
    coords: Vec<usize>,
    values: Vec<f64>,
}

impl CooTensor {
    /// Builds a tensor from entries that must already be sorted without duplicates.
    pub fn new(dims: Vec<usize>, entries: Vec<(Vec<usize>, f64)>) -> Result<Self> {
        check_dims(&dims)?;
        let order = dims.len();
        let mut coords = Vec::with_capacity(entries.len() * order);
        let mut values = Vec::with_capacity(entries.len());
        for (n, (idx, v)) in entries.into_iter().enumerate() {
            if idx.len() != order {
                return Err(Error::InvalidSparse(format!(
                    "entry {n} has {} indices, expected {order}",
                    idx.len()
                )));
            }
            if let Some((m, (&i, &d))) = idx.iter().zip(&dims).enumerate().find(|(_, (&i, &d))| i >= d) {
                return Err(Error::InvalidSparse(format!(
                    "entry {n}: index {i} out of range for mode {m} (extent {d})"
                )));
            }
            if n > 0 {
                let prev = &coords[(n - 1) * order..n * order];
                if prev >= idx.as_slice() {
                    return Err(Error::InvalidSparse(format!(
                        "entry {n} {idx:?} is not strictly after {prev:?}"
                    )));
                }
            }
            coords.extend_from_slice(&idx);
            values.push(v);
        }
        Ok(Self {
            dims,
            coords,
            values,
        })
    }

    /// Sorts arbitrary entries; duplicate indices are rejected.
    pub fn from_unsorted(dims: Vec<usize>, mut entries: Vec<(Vec<usize>, f64)>) -> Result<Self> {
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        Self::new(dims, entries)
    }

    /// Keeps the nonzero entries of a dense tensor.
    pub fn from_dense(t: &DenseTensor) -> Self {
        let order = t.order();
        let mut coords = Vec::new();
        let mut values = Vec::new();
        let mut idx = vec![0; order];
        for &v in t.values() {
            if v != 0.0 {
                coords.extend_from_slice(&idx);
                values.push(v);
            }
            super::dense::next_index(&mut idx, t.dims());
        }
        Self {
            dims: t.dims().to_vec(),
            coords,
            values,
        }
    }

    pub fn to_dense(&self) -> DenseTensor {
        let mut t = DenseTensor::zeros(self.dims.clone()).expect("dims validated at construction");
        for (idx, v) in self.iter() {
            let lin = t.linear_index(idx);
            t.values_mut()[lin] = v;
        }
        t
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[usize], f64)> + '_ {
        self.coords
            .chunks_exact(self.order())
            .zip(self.values.iter().copied())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unsorted_duplicate_and_out_of_range() {
        let dims = vec![2, 2, 2];
        assert!(CooTensor::new(dims.clone(), vec![(vec![1, 0, 0], 1.0), (vec![0, 0, 0], 1.0)]).is_err());
        assert!(CooTensor::new(dims.clone(), vec![(vec![0, 0, 0], 1.0), (vec![0, 0, 0], 2.0)]).is_err());
        assert!(CooTensor::new(dims.clone(), vec![(vec![0, 2, 0], 1.0)]).is_err());
        assert!(CooTensor::new(dims.clone(), vec![(vec![0, 0], 1.0)]).is_err());
        assert!(CooTensor::from_unsorted(dims, vec![(vec![1, 1, 1], 1.0), (vec![0, 1, 0], 2.0)]).is_ok());
    }

    #[test]
    fn dense_round_trip() {
        let t = DenseTensor::from_fn(vec![2, 3, 2], |i| if i[1] == 1 { 0.0 } else { (i[0] + i[2]) as f64 + 0.5 })
            .unwrap();
        let s = CooTensor::from_dense(&t);
        assert_eq!(s.nnz(), 8);
        assert_eq!(s.to_dense(), t);
    }
}
