use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::tensor::KruskalModel;

fn dot(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.dot(&b)
}

/// Relative error of each estimated factor against the truth, invariant to
/// column permutation and per-column scaling.
///
/// Columns are paired greedily by the product over modes of the absolute
/// cosine similarity; each matched estimate column is then scaled by least
/// squares onto its truth column, and mode `n` reports
/// `‖Uₙ − Ûₙ Π Λ‖_F / ‖Uₙ‖_F`.
pub fn factor_match_error(estimate: &KruskalModel, truth: &KruskalModel) -> Result<Vec<f64>> {
    if estimate.rank() != truth.rank() || estimate.dims() != truth.dims() {
        return Err(Error::DimensionMismatch(format!(
            "estimate {:?} rank {} vs truth {:?} rank {}",
            estimate.dims(),
            estimate.rank(),
            truth.dims(),
            truth.rank()
        )));
    }
    let f = truth.rank();
    let mut score = Array2::<f64>::ones((f, f));
    for (e, t) in estimate.factors().iter().zip(truth.factors()) {
        for a in 0..f {
            for b in 0..f {
                let (ea, tb) = (e.column(a), t.column(b));
                let denom = (dot(ea, ea) * dot(tb, tb)).sqrt();
                score[[a, b]] *= if denom > 0.0 { dot(ea, tb).abs() / denom } else { 0.0 };
            }
        }
    }
    // matched[b] = estimate column assigned to truth column b
    let mut matched = vec![usize::MAX; f];
    let mut used = vec![false; f];
    for _ in 0..f {
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for a in (0..f).filter(|&a| !used[a]) {
            for b in (0..f).filter(|&b| matched[b] == usize::MAX) {
                if score[[a, b]] > best.0 {
                    best = (score[[a, b]], a, b);
                }
            }
        }
        used[best.1] = true;
        matched[best.2] = best.1;
    }
    Ok(estimate
        .factors()
        .iter()
        .zip(truth.factors())
        .map(|(e, t)| {
            let mut err = 0.0;
            for (b, &a) in matched.iter().enumerate() {
                let (ea, tb) = (e.column(a), t.column(b));
                let ee = dot(ea, ea);
                let scale = if ee > 0.0 { dot(ea, tb) / ee } else { 0.0 };
                err += ea.iter().zip(tb).map(|(x, y)| (y - scale * x).powi(2)).sum::<f64>();
            }
            let total: f64 = t.iter().map(|v| v * v).sum();
            (err / total).sqrt()
        })
        .collect())
}
