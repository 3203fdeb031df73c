//! Shard-level debiased and desparsified estimators.

mod linear;
mod nodewise;

pub use linear::{debias_linear, debias_linear_for, debias_with_precision, debias_with_weights, residual_variance};
pub use nodewise::{desparsify_glm, nodewise_lasso, nodewise_lasso_for, NodewiseResult};

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::Real;

/// Debiased estimate on one shard for a set of coordinates.
///
/// Per-coordinate vectors (`beta_d`, `q`, `flags`, rows of `theta_rows`,
/// columns of `b`) are aligned with `coords`.
#[derive(Clone, Debug, PartialEq)]
pub struct DebiasedFit<T> {
    pub coords: Vec<usize>,
    pub dim: usize,
    /// Rows in the shard.
    pub n_obs: usize,
    pub beta_lambda: Array1<T>,
    pub beta_d: Array1<T>,
    /// `Q̂_v = ‖b_v‖₂/√n_k` (linear construction).
    pub q: Option<Array1<T>>,
    /// Rows of the nodewise `Θ̂` (GLM construction).
    pub theta_rows: Option<Array2<T>>,
    /// Mean squared residual of the penalized fit (Gaussian family).
    pub sigma2_hat: Option<T>,
    /// Coordinates whose weights came from the fallback rule.
    pub flags: Vec<bool>,
    /// Debiasing weights `b_v`, one column per coordinate.
    pub b: Option<Array2<T>>,
}

impl<T: Real> DebiasedFit<T> {
    /// Position of coordinate `v` in `coords`.
    pub fn position(&self, v: usize) -> Result<usize> {
        self.coords
            .iter()
            .position(|&c| c == v)
            .ok_or(Error::Index { index: v, len: self.dim })
    }

    pub fn beta_d_at(&self, v: usize) -> Result<T> {
        Ok(self.beta_d[self.position(v)?])
    }

    /// `β̂ᵈ` as a full `d`-vector; coordinates that were not debiased keep
    /// the penalized estimate.
    pub fn beta_d_full(&self) -> Array1<T> {
        let mut out = self.beta_lambda.clone();
        for (i, &v) in self.coords.iter().enumerate() {
            out[v] = self.beta_d[i];
        }
        out
    }
}
