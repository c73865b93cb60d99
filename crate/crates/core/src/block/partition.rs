use std::ops::Range;

use ndarray::{s, Array2};

use crate::error::{Error, Result};
use crate::tensor::{check_dims, check_mode, DenseTensor};

/// The mode whose index range splits the columns of the mode-`mode`
/// unfolding: the highest mode other than `mode` itself.
pub fn column_mode(mode: usize, order: usize) -> usize {
    if mode == order - 1 {
        order - 2
    } else {
        order - 1
    }
}

/// Per-mode block extents. Block `b` of mode `m` covers a contiguous range
/// of row indices of factor `m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    extents: Vec<Vec<usize>>,
}

impl PartitionPlan {
    pub fn new(extents: Vec<Vec<usize>>) -> Result<Self> {
        if extents.iter().any(|e| e.is_empty() || e.contains(&0)) {
            return Err(Error::Partition("every mode needs at least one non-empty block".into()));
        }
        Ok(Self { extents })
    }

    /// Splits mode `m` into `counts[m]` nearly equal blocks, larger ones first.
    pub fn uniform(dims: &[usize], counts: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        if counts.len() != dims.len() {
            return Err(Error::Partition(format!(
                "{} block counts for an order-{} tensor",
                counts.len(),
                dims.len()
            )));
        }
        let mut extents = Vec::with_capacity(dims.len());
        for (m, (&d, &n)) in dims.iter().zip(counts).enumerate() {
            if n == 0 || n > d {
                return Err(Error::Partition(format!(
                    "cannot split extent {d} of mode {m} into {n} blocks"
                )));
            }
            extents.push((0..n).map(|b| d / n + usize::from(b < d % n)).collect());
        }
        Self::new(extents)
    }

    /// The same number of blocks `n` in every mode.
    pub fn even(dims: &[usize], n: usize) -> Result<Self> {
        Self::uniform(dims, &vec![n; dims.len()])
    }

    pub fn order(&self) -> usize {
        self.extents.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.extents.iter().map(Vec::len).collect()
    }

    pub fn extents(&self, mode: usize) -> &[usize] {
        &self.extents[mode]
    }

    /// `Some(n)` if every mode has exactly `n` blocks.
    pub fn mesh_size(&self) -> Option<usize> {
        let n = self.extents[0].len();
        self.extents.iter().all(|e| e.len() == n).then_some(n)
    }

    pub fn range(&self, mode: usize, block: usize) -> Range<usize> {
        let start: usize = self.extents[mode][..block].iter().sum();
        start..start + self.extents[mode][block]
    }

    pub fn check_dims(&self, dims: &[usize]) -> Result<()> {
        if dims.len() != self.order() {
            return Err(Error::Partition(format!(
                "order-{} plan for an order-{} tensor",
                self.order(),
                dims.len()
            )));
        }
        for (m, (e, &d)) in self.extents.iter().zip(dims).enumerate() {
            let total: usize = e.iter().sum();
            if total != d {
                return Err(Error::Partition(format!(
                    "mode {m} blocks sum to {total}, tensor extent is {d}"
                )));
            }
        }
        Ok(())
    }

    /// Index ranges of the sub-tensor backing block `(row, col)` of the
    /// mode-`mode` unfolding.
    pub fn block_ranges(&self, dims: &[usize], mode: usize, row: usize, col: usize) -> Vec<Range<usize>> {
        let p = column_mode(mode, dims.len());
        (0..dims.len())
            .map(|n| match n {
                _ if n == mode => self.range(mode, row),
                _ if n == p => self.range(p, col),
                _ => 0..dims[n],
            })
            .collect()
    }
}

/// Blocked storage of every unfolding. Block `(i, j)` of mode `m` holds the
/// entries with mode-`m` index in row block `i` and column-mode index in
/// block `j`, stored as a dense sub-tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrid {
    dims: Vec<usize>,
    plan: PartitionPlan,
    blocks: Vec<Vec<Vec<DenseTensor>>>,
}

impl BlockGrid {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn plan(&self) -> &PartitionPlan {
        &self.plan
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn block(&self, mode: usize, row: usize, col: usize) -> &DenseTensor {
        &self.blocks[mode][row][col]
    }

    /// Block `(row, col)` of the mode-`mode` unfolding as a matrix.
    pub fn block_matrix(&self, mode: usize, row: usize, col: usize) -> Array2<f64> {
        self.block(mode, row, col).unfold(mode).expect("block modes are in range")
    }

    /// Rebuilds the full mode-`mode` unfolding from its blocks.
    pub fn reassemble(&self, mode: usize) -> Result<Array2<f64>> {
        check_mode(mode, self.order())?;
        let p = column_mode(mode, self.order());
        let rows = self.dims[mode];
        let cols: usize = self.dims.iter().product::<usize>() / rows;
        let mut out = Array2::zeros((rows, cols));
        // Column index of an unfolding entry: lower modes vary fastest.
        let stride_below_p: usize = (0..p).filter(|&n| n != mode).map(|n| self.dims[n]).product();
        for (i, row_blocks) in self.blocks[mode].iter().enumerate() {
            let r = self.plan.range(mode, i);
            for (j, block) in row_blocks.iter().enumerate() {
                let c = self.plan.range(p, j);
                let sub = block.unfold(mode)?;
                let sub_below = stride_below_p;
                let sub_p = c.len();
                for (sc, col) in sub.columns().into_iter().enumerate() {
                    let low = sc % sub_below;
                    let pi = (sc / sub_below) % sub_p;
                    let high = sc / (sub_below * sub_p);
                    let full_col = low + (c.start + pi) * sub_below + high * sub_below * self.dims[p];
                    out.slice_mut(s![r.clone(), full_col]).assign(&col);
                }
            }
        }
        Ok(out)
    }
}

/// Splits every unfolding of `t` into blocks according to `plan`.
pub fn partition(t: &DenseTensor, plan: &PartitionPlan) -> Result<BlockGrid> {
    plan.check_dims(t.dims())?;
    let dims = t.dims().to_vec();
    let order = dims.len();
    let blocks = (0..order)
        .map(|m| {
            let p = column_mode(m, order);
            (0..plan.extents(m).len())
                .map(|i| {
                    (0..plan.extents(p).len())
                        .map(|j| t.sub_box(&plan.block_ranges(&dims, m, i, j)))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BlockGrid { dims, plan: plan.clone(), blocks })
}
