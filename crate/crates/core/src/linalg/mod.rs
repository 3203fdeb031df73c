//! Dense linear algebra, the dataset container and the shard partitioner.

mod dataset;
mod dense;
mod gram;
mod partition;
mod sum;

pub use dataset::{CsvOptions, Dataset, Family, ResponseColumn};
pub use dense::{cholesky_solve, inverse, lu_solve, Cholesky, Lu};
pub use gram::{Gram, SymOperator};
pub use partition::{shard, Partition};
pub use sum::{compensated_mean, compensated_sum, NeumaierSum};
