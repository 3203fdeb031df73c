//! Aggregation of shard results into divide-and-conquer estimators and tests.

mod aggregate;
mod inference;
mod lowdim;
mod threshold;

pub use aggregate::{aggregate_debiased, DcEstimate};
pub use inference::{
    conditional_information, critical_value, normal_p_value, score_statistic, wald_glm, wald_linear, TestMethod,
    TestResult, DEFAULT_LEVELS,
};
pub use lowdim::{average_glm, average_ols, refit, weighted_ols_aggregate, RefitResult};
pub use threshold::{bootstrap_threshold, hard_threshold, theta_tilde, theta_tilde_rows};
