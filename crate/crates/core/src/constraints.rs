//! Constraint sets for factor matrices and their Euclidean projections.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayViewMut1};

use crate::error::{Error, Result};

/// Constraint applied to one factor mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConstraintSpec {
    /// No constraint; the projection is the identity.
    Unconstrained,
    /// Element-wise non-negativity.
    #[default]
    NonNegative,
    /// Non-negative with at most `c` nonzero entries in the whole matrix.
    NonNegativeCardinality(usize),
    /// Every row is a probability mass function.
    RowStochastic,
}

impl ConstraintSpec {
    pub fn cardinality(c: usize) -> Result<Self> {
        if c == 0 {
            return Err(Error::InvalidConstraint("cardinality bound must be positive".into()));
        }
        Ok(Self::NonNegativeCardinality(c))
    }

    /// Checks the spec against the shape of the factor it will constrain.
    pub fn validate_for(&self, rows: usize, cols: usize) -> Result<()> {
        match *self {
            Self::NonNegativeCardinality(0) => {
                Err(Error::InvalidConstraint("cardinality bound must be positive".into()))
            }
            Self::NonNegativeCardinality(c) if c > rows * cols => Err(Error::InvalidConstraint(format!(
                "cardinality bound {c} exceeds the {rows}x{cols} factor size"
            ))),
            _ => Ok(()),
        }
    }

    /// Whether the projection acts on each row independently, so it can be
    /// applied to row blocks without gathering the whole matrix.
    pub fn is_row_separable(&self) -> bool {
        !matches!(self, Self::NonNegativeCardinality(_))
    }
}

impl fmt::Display for ConstraintSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Unconstrained => f.write_str("none"),
            Self::NonNegative => f.write_str("nonneg"),
            Self::NonNegativeCardinality(c) => write!(f, "nonneg_card:{c}"),
            Self::RowStochastic => f.write_str("row_stochastic"),
        }
    }
}

impl FromStr for ConstraintSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(Self::Unconstrained),
            "nonneg" => Ok(Self::NonNegative),
            "row_stochastic" => Ok(Self::RowStochastic),
            other => match other.strip_prefix("nonneg_card:") {
                Some(c) => Self::cardinality(
                    c.parse()
                        .map_err(|_| Error::InvalidConstraint(format!("bad cardinality in {other:?}")))?,
                ),
                None => Err(Error::InvalidConstraint(format!("unknown constraint {other:?}"))),
            },
        }
    }
}

/// Euclidean projection of `m` onto the set described by `spec`.
pub fn project(m: &Array2<f64>, spec: ConstraintSpec) -> Array2<f64> {
    let mut out = m.clone();
    project_in_place(&mut out, spec);
    out
}

pub fn project_in_place(m: &mut Array2<f64>, spec: ConstraintSpec) {
    match spec {
        ConstraintSpec::Unconstrained => {}
        ConstraintSpec::NonNegative => m.mapv_inplace(|v| v.max(0.0)),
        ConstraintSpec::NonNegativeCardinality(c) => {
            m.mapv_inplace(|v| v.max(0.0));
            keep_largest(m, c);
        }
        ConstraintSpec::RowStochastic => {
            for row in m.rows_mut() {
                project_simplex(row);
            }
        }
    }
}

/// Zeroes all but the `c` largest entries. Ties keep the smaller row-major index.
fn keep_largest(m: &mut Array2<f64>, c: usize) {
    let vals: Vec<f64> = m.iter().copied().collect();
    if vals.iter().filter(|&&v| v != 0.0).count() <= c {
        return;
    }
    let mut order: Vec<usize> = (0..vals.len()).collect();
    // stable: equal values stay in index order
    order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap_or(Ordering::Equal));
    let mut keep = vec![false; vals.len()];
    for &i in &order[..c] {
        keep[i] = true;
    }
    for (v, k) in m.iter_mut().zip(keep) {
        if !k {
            *v = 0.0;
        }
    }
}

fn is_on_simplex(row: &ArrayViewMut1<'_, f64>) -> bool {
    row.iter().all(|&v| v >= 0.0) && row.iter().sum::<f64>() == 1.0
}

/// Sort-and-threshold projection onto `{x ≥ 0, Σx = 1}`, followed by a
/// correction of the largest entry so the row sums to exactly 1.0 in
/// floating point.
fn project_simplex(mut row: ArrayViewMut1<'_, f64>) {
    if is_on_simplex(&row) {
        return;
    }
    let mut sorted: Vec<f64> = row.iter().copied().collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    row.mapv_inplace(|v| (v - theta).max(0.0));

    let argmax = row
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > row[best] { i } else { best });
    for _ in 0..4 {
        let s: f64 = row.iter().sum();
        if s == 1.0 {
            break;
        }
        row[argmax] = (row[argmax] + (1.0 - s)).max(0.0);
    }
}

/// True if `m` violates no part of `spec` by more than `tol`.
pub fn is_feasible(m: &Array2<f64>, spec: ConstraintSpec, tol: f64) -> bool {
    let nonneg = || m.iter().all(|&v| v >= -tol);
    match spec {
        ConstraintSpec::Unconstrained => m.iter().all(|v| v.is_finite()),
        ConstraintSpec::NonNegative => nonneg(),
        ConstraintSpec::NonNegativeCardinality(c) => {
            nonneg() && m.iter().filter(|v| v.abs() > tol).count() <= c
        }
        ConstraintSpec::RowStochastic => {
            nonneg() && m.rows().into_iter().all(|r| (r.sum() - 1.0).abs() <= tol)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn nonneg_clamps() {
        assert_eq!(project(&array![[-1.0, 2.0]], ConstraintSpec::NonNegative), array![[0.0, 2.0]]);
    }

    #[test]
    fn cardinality_keeps_largest() {
        let p = project(&array![[3.0, -1.0], [2.0, 5.0]], ConstraintSpec::NonNegativeCardinality(2));
        assert_eq!(p, array![[3.0, 0.0], [0.0, 5.0]]);
    }

    #[test]
    fn cardinality_ties_keep_lower_index() {
        let p = project(&array![[1.0, 2.0], [2.0, 0.5]], ConstraintSpec::NonNegativeCardinality(1));
        assert_eq!(p, array![[0.0, 2.0], [0.0, 0.0]]);
    }

    #[test]
    fn simplex_vertex() {
        assert_eq!(project(&array![[2.0, 0.0]], ConstraintSpec::RowStochastic), array![[1.0, 0.0]]);
        assert_eq!(project(&array![[0.5, 0.5]], ConstraintSpec::RowStochastic), array![[0.5, 0.5]]);
    }

    #[test]
    fn feasibility_checks() {
        assert!(is_feasible(&array![[0.0, 1.0]], ConstraintSpec::NonNegative, 0.0));
        assert!(is_feasible(&array![[-1e-12, 1.0]], ConstraintSpec::NonNegative, 1e-9));
        assert!(!is_feasible(&array![[-1e-6, 1.0]], ConstraintSpec::NonNegative, 1e-9));
        assert!(!is_feasible(&array![[0.5, 0.6]], ConstraintSpec::RowStochastic, 1e-9));
        assert!(is_feasible(&array![[0.4, 0.6]], ConstraintSpec::RowStochastic, 1e-9));
        assert!(!is_feasible(&array![[1.0, 1.0]], ConstraintSpec::NonNegativeCardinality(1), 0.0));
    }

    #[test]
    fn parse_and_display() {
        for s in ["none", "nonneg", "nonneg_card:7", "row_stochastic"] {
            assert_eq!(s.parse::<ConstraintSpec>().unwrap().to_string(), s);
        }
        assert!("nonneg_card:0".parse::<ConstraintSpec>().is_err());
        assert!("nonneg_card:x".parse::<ConstraintSpec>().is_err());
        assert!("box".parse::<ConstraintSpec>().is_err());
    }

    #[test]
    fn validate_against_shape() {
        assert!(ConstraintSpec::NonNegativeCardinality(6).validate_for(2, 3).is_ok());
        assert!(ConstraintSpec::NonNegativeCardinality(7).validate_for(2, 3).is_err());
        assert!(ConstraintSpec::cardinality(0).is_err());
    }
}
