//! Divide-and-conquer estimation and inference for high-dimensional
//! linear and logistic regression.
//!
//! The data are split into `k` equal shards; each shard fits a penalized
//! estimator, debiases it, and the shard statistics are averaged into Wald
//! and score tests, thresholded sparse estimates, and low-dimensional
//! averaged or refitted estimates.
//!
//! Numerical code is generic over [`Real`]; the aliases below fix `f64`.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dc;
pub mod debias;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod pipeline;

mod scalar;
pub mod solvers;

pub use error::{Error, Result};
pub use linalg::{Dataset, Family, Partition};
pub use scalar::Real;

pub type Dataset64 = linalg::Dataset<f64>;
pub type ShardFit64 = solvers::ShardFit<f64>;
pub type Penalty64 = solvers::Penalty<f64>;
pub type DebiasedFit64 = debias::DebiasedFit<f64>;
pub type NodewiseResult64 = debias::NodewiseResult<f64>;
pub type TestResult64 = dc::TestResult<f64>;
pub type DcEstimate64 = dc::DcEstimate<f64>;
