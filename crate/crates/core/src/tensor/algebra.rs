//! Khatri-Rao and Hadamard algebra on factor matrices.

use std::borrow::Cow;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

use super::dense::check_mode;
use super::model::KruskalModel;

/// Row-major contents of a matrix view, borrowed when already contiguous.
pub(crate) fn row_major<'a>(m: &'a ArrayView2<'_, f64>) -> Cow<'a, [f64]> {
    match m.as_slice() {
        Some(s) => Cow::Borrowed(s),
        None => Cow::Owned(m.iter().copied().collect()),
    }
}

/// Khatri-Rao (columnwise Kronecker) product, right-associated:
/// `kr(&[D, C, B]) = D ⊙ (C ⊙ B)`. The last input varies fastest, so with
/// `C: K×F` and `B: J×F` row `j + k*J` of `kr(&[C, B])` is `C[k,:] ∘ B[j,:]`.
pub fn kr(ms: &[ArrayView2<'_, f64>]) -> Result<Array2<f64>> {
    let first = ms
        .first()
        .ok_or_else(|| Error::DimensionMismatch("Khatri-Rao product of no matrices".into()))?;
    let f = first.ncols();
    if let Some(bad) = ms.iter().find(|m| m.ncols() != f) {
        return Err(Error::DimensionMismatch(format!(
            "Khatri-Rao inputs have {} and {} columns",
            f,
            bad.ncols()
        )));
    }
    let mut out = first.to_owned();
    for m in &ms[1..] {
        let (outer, inner) = (out.nrows(), m.nrows());
        let mut next = Array2::zeros((outer * inner, f));
        for o in 0..outer {
            for i in 0..inner {
                for c in 0..f {
                    next[[i + o * inner, c]] = out[[o, c]] * m[[i, c]];
                }
            }
        }
        out = next;
    }
    Ok(out)
}

/// `UᵀU` accumulated row by row.
pub fn gram(u: &ArrayView2<'_, f64>) -> Array2<f64> {
    let f = u.ncols();
    let data = row_major(u);
    let mut g = Array2::zeros((f, f));
    for row in data.chunks_exact(f) {
        for a in 0..f {
            let ra = row[a];
            for b in 0..f {
                g[[a, b]] += ra * row[b];
            }
        }
    }
    g
}

/// Hadamard product of the Gram matrices of `factors`, in the given order.
pub(crate) fn hadamard_of_grams<'a>(
    f: usize,
    factors: impl IntoIterator<Item = ArrayView2<'a, f64>>,
) -> Array2<f64> {
    let mut g = Array2::<f64>::ones((f, f));
    for u in factors {
        g *= &gram(&u);
    }
    g
}

/// `⊛_{n != skip} UₙᵀUₙ`, which equals `KᵀK` for the Khatri-Rao product `K`
/// of every factor except `skip`.
pub fn gram_hadamard(model: &KruskalModel, skip: usize) -> Result<Array2<f64>> {
    check_mode(skip, model.order())?;
    Ok(hadamard_of_grams(
        model.rank(),
        model
            .factors()
            .iter()
            .enumerate()
            .filter(|(n, _)| *n != skip)
            .map(|(_, u)| u.view()),
    ))
}

/// Khatri-Rao product of every factor except `mode`, in the column order of
/// the mode-`mode` unfolding (highest mode outermost).
pub fn kr_except(model: &KruskalModel, mode: usize) -> Result<Array2<f64>> {
    check_mode(mode, model.order())?;
    let views: Vec<_> = model
        .factors()
        .iter()
        .enumerate()
        .rev()
        .filter(|(n, _)| *n != mode)
        .map(|(_, u)| u.view())
        .collect();
    kr(&views)
}

pub fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn kr_column_vectors() {
        let c = array![[1.0], [2.0]];
        let b = array![[3.0], [4.0]];
        let k = kr(&[c.view(), b.view()]).unwrap();
        assert_eq!(k, array![[3.0], [4.0], [6.0], [8.0]]);
    }

    #[test]
    fn kr_identities() {
        let i2 = Array2::<f64>::eye(2);
        let k = kr(&[i2.view(), i2.view()]).unwrap();
        assert_eq!(k, array![[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn kr_single_ones_row_is_identity() {
        let c = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let ones = array![[1.0, 1.0]];
        assert_eq!(kr(&[c.view(), ones.view()]).unwrap(), c);
    }

    #[test]
    fn kr_rejects_mismatched_columns() {
        let a = Array2::<f64>::zeros((2, 2));
        let b = Array2::<f64>::zeros((2, 3));
        assert!(kr(&[a.view(), b.view()]).is_err());
        assert!(kr(&[]).is_err());
    }

    #[test]
    fn gram_hadamard_of_identities() {
        let i2 = Array2::<f64>::eye(2);
        let m = KruskalModel::new(vec![i2.clone(), i2.clone(), i2.clone()]).unwrap();
        assert_eq!(gram_hadamard(&m, 0).unwrap(), i2);
        assert!(gram_hadamard(&m, 3).is_err());
    }
}
