//! Block-partitioned ADMM over a simulated mesh of processing elements.
//!
//! The tensor is split into an `n × n` grid of blocks per unfolding. For each
//! factor update the host broadcasts the other factors down the mesh columns,
//! partial MTTKRPs and Gram terms are summed left to right along each block
//! row, and the rightmost elements solve for their factor row block and keep
//! the auxiliary and dual blocks locally.

mod engine;
mod math;
mod mesh;
mod partition;

pub use engine::{distributed_fit, MeshEngine, MeshOptions, Scheduler};
pub use math::{block_factor_update, partial_gram_sum, reduce_partials};
pub use mesh::{messages_per_iteration, write_trace, Message, Node, Payload, TraceRecord, Wave};
pub use partition::{column_mode, partition, BlockGrid, PartitionPlan};
