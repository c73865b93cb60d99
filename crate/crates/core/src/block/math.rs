use ndarray::{s, Array2, ArrayView2};

use crate::constraints::ConstraintSpec;
use crate::error::{Error, Result};
use crate::solver::{solve_factor_rows, SolverState};
use crate::tensor::{check_mode, hadamard_of_grams, mttkrp_dense_raw, DenseTensor};

use super::partition::{column_mode, BlockGrid, PartitionPlan};

/// Sums equally shaped matrices strictly left to right.
pub fn reduce_partials(partials: &[Array2<f64>]) -> Result<Array2<f64>> {
    let (first, rest) = partials
        .split_first()
        .ok_or_else(|| Error::DimensionMismatch("nothing to reduce".into()))?;
    let mut acc = first.clone();
    for p in rest {
        accumulate(&mut acc, p)?;
    }
    Ok(acc)
}

pub(crate) fn accumulate(acc: &mut Array2<f64>, next: &Array2<f64>) -> Result<()> {
    if acc.dim() != next.dim() {
        return Err(Error::DimensionMismatch(format!(
            "partial of shape {:?} added to {:?}",
            next.dim(),
            acc.dim()
        )));
    }
    *acc += next;
    Ok(())
}

/// Local MTTKRP of one stored block. `factors[n]` must already be restricted
/// to the rows the block spans in mode `n`; `factors[mode]` is not read.
pub(crate) fn local_mttkrp(block: &DenseTensor, factors: &[ArrayView2<'_, f64>], mode: usize) -> Result<Array2<f64>> {
    mttkrp_dense_raw(block.values(), block.dims(), factors, mode)
}

/// Local Gram term `⊛_{n≠mode} UₙᵀUₙ` with the column-mode factor restricted
/// to one block; ascending mode order.
pub(crate) fn local_gram(rank: usize, factors: &[ArrayView2<'_, f64>], mode: usize) -> Array2<f64> {
    hadamard_of_grams(
        rank,
        factors.iter().enumerate().filter(|(n, _)| *n != mode).map(|(_, u)| u.view()),
    )
}

/// Factor views for block column `col` of the mode-`mode` unfolding.
fn block_views<'a>(
    plan: &PartitionPlan,
    factors: &'a [Array2<f64>],
    mode: usize,
    col: usize,
) -> Vec<ArrayView2<'a, f64>> {
    let p = column_mode(mode, factors.len());
    factors
        .iter()
        .enumerate()
        .map(|(n, u)| match n {
            _ if n == mode => u.slice(s![0..0, ..]),
            _ if n == p => u.slice(s![plan.range(p, col), ..]),
            _ => u.view(),
        })
        .collect()
}

/// `Σ_j (C_j ⊙ B)ᵀ(C_j ⊙ B)` style partial Gram sum over the column blocks.
pub fn partial_gram_sum(plan: &PartitionPlan, factors: &[Array2<f64>], mode: usize) -> Result<Array2<f64>> {
    check_mode(mode, factors.len())?;
    let rank = factors[0].ncols();
    let p = column_mode(mode, factors.len());
    let partials: Vec<_> = (0..plan.extents(p).len())
        .map(|j| local_gram(rank, &block_views(plan, factors, mode, j), mode))
        .collect();
    reduce_partials(&partials)
}

/// New value of row block `row` of factor `mode`, computed from the blocks
/// of that row only: partial MTTKRPs and partial Gram terms are reduced over
/// the column blocks, then the shared penalized system is solved.
pub fn block_factor_update(
    grid: &BlockGrid,
    state: &SolverState,
    mode: usize,
    row: usize,
    spec: ConstraintSpec,
) -> Result<Array2<f64>> {
    check_mode(mode, grid.order())?;
    if state.dims() != grid.dims() {
        return Err(Error::DimensionMismatch(format!(
            "state dims {:?} do not match grid dims {:?}",
            state.dims(),
            grid.dims()
        )));
    }
    let plan = grid.plan();
    let p = column_mode(mode, grid.order());
    let mut mttkrps = Vec::new();
    for j in 0..plan.extents(p).len() {
        let views = block_views(plan, &state.factors, mode, j);
        mttkrps.push(local_mttkrp(grid.block(mode, row, j), &views, mode)?);
    }
    let m = reduce_partials(&mttkrps)?;
    let g = partial_gram_sum(plan, &state.factors, mode)?;
    let rows = plan.range(mode, row);
    solve_factor_rows(
        &m,
        &g,
        state.aux[mode].slice(s![rows.clone(), ..]),
        state.duals[mode].slice(s![rows, ..]),
        state.penalties[mode],
        spec,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{factor_update, init_state, SolverConfig};
    use crate::tensor::kr;
    use ndarray::{array, concatenate, Axis};

    #[test]
    fn reduce_cases() {
        let m = array![[1.0, -2.5], [3.0, 0.25]];
        assert_eq!(reduce_partials(&[m.clone()]).unwrap(), m);
        assert_eq!(reduce_partials(&[m.clone(), -&m]).unwrap(), Array2::zeros((2, 2)));
        assert!(reduce_partials(&[]).is_err());
        assert!(reduce_partials(&[m, Array2::zeros((1, 2))]).is_err());
    }

    #[test]
    fn reduction_order_is_left_to_right() {
        let a = array![[1e16]];
        let b = array![[1.0]];
        let c = array![[-1e16]];
        assert_eq!(reduce_partials(&[a.clone(), b.clone(), c.clone()]).unwrap()[[0, 0]], 0.0);
        assert_eq!(reduce_partials(&[a, c, b]).unwrap()[[0, 0]], 1.0);
    }

    fn random_setup(dims: &[usize], rank: usize, seed: u64) -> (DenseTensor, SolverState) {
        let t = DenseTensor::from_fn(dims.to_vec(), |i| {
            ((i.iter().enumerate().map(|(n, &x)| (n + 2) * x * x + x).sum::<usize>() % 11) as f64) / 7.0
        })
        .unwrap();
        let specs = vec![ConstraintSpec::NonNegative; dims.len()];
        let cfg = SolverConfig { seed, ..Default::default() };
        let mut state = init_state(dims, rank, &specs, &cfg).unwrap();
        state.factors[0] = Array2::from_shape_fn((dims[0], rank), |(i, f)| ((i * 3 + f) % 5) as f64 / 4.0);
        state.aux[0] = state.factors[0].mapv(|v| v * 0.5);
        state.duals[0] = state.factors[0].mapv(|v| 0.1 - v);
        state.penalties = vec![1.7; dims.len()];
        (t, state)
    }

    #[test]
    fn blocks_concatenate_to_the_centralized_update() {
        let (t, state) = random_setup(&[4, 4, 4], 3, 9);
        let grid = super::super::partition(&t, &PartitionPlan::even(t.dims(), 2).unwrap()).unwrap();
        for mode in 0..3 {
            let central = factor_update(&state, &t, mode, ConstraintSpec::NonNegative).unwrap();
            let blocks: Vec<_> = (0..2)
                .map(|i| block_factor_update(&grid, &state, mode, i, ConstraintSpec::NonNegative).unwrap())
                .collect();
            let joined = concatenate(Axis(0), &[blocks[0].view(), blocks[1].view()]).unwrap();
            let err = (&joined - &central).mapv(|v| v * v).sum().sqrt();
            assert!(err <= 1e-12 * central.mapv(|v| v * v).sum().sqrt(), "mode {mode}: {err}");
        }
    }

    #[test]
    fn single_block_is_bitwise_centralized() {
        let (t, state) = random_setup(&[3, 5, 4, 2], 2, 4);
        let grid = super::super::partition(&t, &PartitionPlan::even(t.dims(), 1).unwrap()).unwrap();
        for mode in 0..4 {
            for spec in [ConstraintSpec::NonNegative, ConstraintSpec::RowStochastic] {
                assert_eq!(
                    block_factor_update(&grid, &state, mode, 0, spec).unwrap(),
                    factor_update(&state, &t, mode, spec).unwrap()
                );
            }
        }
    }

    #[test]
    fn unequal_block_counts() {
        let (t, state) = random_setup(&[6, 5, 4], 2, 2);
        let plan = PartitionPlan::uniform(t.dims(), &[3, 2, 4]).unwrap();
        let grid = super::super::partition(&t, &plan).unwrap();
        for mode in 0..3 {
            let central = factor_update(&state, &t, mode, ConstraintSpec::NonNegative).unwrap();
            for i in 0..plan.extents(mode).len() {
                let b = block_factor_update(&grid, &state, mode, i, ConstraintSpec::NonNegative).unwrap();
                let c = central.slice(s![plan.range(mode, i), ..]);
                assert!(b.iter().zip(c).all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + y.abs())));
            }
        }
    }

    #[test]
    fn partial_gram_identity() {
        let (_, state) = random_setup(&[4, 5, 6], 3, 1);
        let plan = PartitionPlan::uniform(&[4, 5, 6], &[2, 2, 3]).unwrap();
        let k = kr(&[state.factors[2].view(), state.factors[1].view()]).unwrap();
        let full = k.t().dot(&k);
        let parts = partial_gram_sum(&plan, &state.factors, 0).unwrap();
        assert!(full.iter().zip(&parts).all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0)));
    }
}
