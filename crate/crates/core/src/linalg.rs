//! Small dense Cholesky factorization for the F×F normal equations.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Array2<f64>,
}

impl Cholesky {
    pub fn factor(a: &Array2<f64>) -> Result<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "Cholesky of a non-square matrix");
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut d = a[[j, j]];
            for k in 0..j {
                d -= l[[j, k]] * l[[j, k]];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            let d = d.sqrt();
            l[[j, j]] = d;
            for i in j + 1..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / d;
            }
        }
        Ok(Self { l })
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.l.nrows();
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[[i, k]] * b[k];
            }
            b[i] = s / self.l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= self.l[[k, i]] * b[k];
            }
            b[i] = s / self.l[[i, i]];
        }
    }

    /// `rhs · A⁻¹` for symmetric `A`, one row at a time.
    pub fn solve_rows(&self, rhs: &Array2<f64>) -> Array2<f64> {
        let mut out = rhs.to_owned();
        for mut row in out.rows_mut() {
            let slice = row.as_slice_mut().expect("owned rows are contiguous");
            self.solve_in_place(slice);
        }
        out
    }
}

/// Factors `G + ρI`. A non-positive `ρ` is reported as a penalty error.
pub fn factor_penalized(gram: &Array2<f64>, rho: f64) -> Result<Cholesky> {
    if !(rho > 0.0) {
        return Err(Error::InvalidPenalty(rho));
    }
    let mut a = gram.clone();
    a.diag_mut().mapv_inplace(|d| d + rho);
    Cholesky::factor(&a)
}
