//! Optimization kernels: penalized M-estimation, the debiasing-weight
//! program, the Dantzig selector and unpenalized GLM fits.

mod dantzig;
mod debias_weights;
mod glm;
mod loss;
mod penalized;
mod penalty;
mod quadratic;

/// Coordinate-descent internals shared with the debiasing layer.
pub(crate) mod quadratic_internal {
    pub(crate) use super::quadratic::{coordinate_descent, DesignQuadratic, Smooth};
}

pub use dantzig::{dantzig_select, dantzig_select_op, DantzigSolution};
pub use debias_weights::{debias_weights, debias_weights_for, DebiasWeights};
pub use glm::{fit_mle, MleFit};
pub use loss::{gradient, hessian, hessian_column, hessian_weights, mean_response, negative_log_likelihood};
pub use penalized::{fit_penalized, fit_penalized_from, ShardFit};
pub use penalty::{Penalty, PenaltyKind};
pub use quadratic::{quadratic_lasso, QuadraticFit};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Iteration controls shared by the iterative solvers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub max_iters: usize,
    /// Sup-norm change per sweep below which a sweep counts as converged.
    pub tol: f64,
    pub active_set: bool,
    /// Keep the penalized objective after every sweep in `ShardFit::objective_trace`.
    #[serde(default)]
    pub record_trace: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            tol: 1e-7,
            active_set: true,
            record_trace: false,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}
