use ndarray::{Array1, ArrayView1};

use super::threshold::hard_threshold;
use crate::debias::DebiasedFit;
use crate::error::{Error, Result};
use crate::linalg::{compensated_mean, compensated_sum};
use crate::Real;

/// Aggregated debiased estimate, optionally hard-thresholded.
///
/// `beta_bar_d`, `beta_thresholded` and `theta_tilde_vv` are aligned with
/// `coords`; `support` lists coordinates (not positions).
#[derive(Clone, Debug, PartialEq)]
pub struct DcEstimate<T> {
    pub coords: Vec<usize>,
    pub beta_bar_d: Array1<T>,
    pub beta_thresholded: Array1<T>,
    pub nu: T,
    pub support: Vec<usize>,
    pub sigma_bar2: Option<T>,
    pub theta_tilde_vv: Option<Array1<T>>,
}

impl<T: Real> DcEstimate<T> {
    /// Re-thresholds `beta_bar_d` at `nu`.
    pub fn with_threshold(mut self, nu: T) -> Self {
        self.beta_thresholded = hard_threshold(self.beta_bar_d.view(), nu);
        self.support = self
            .coords
            .iter()
            .zip(self.beta_bar_d.iter())
            .filter(|(_, b)| b.abs() >= nu)
            .map(|(&v, _)| v)
            .collect();
        self.nu = nu;
        self
    }

    /// Support for refitting, `{v : |β̄ᵈ_v| > 2ν}`. `ν` bounds the sup-norm
    /// error of `β̄ᵈ`, so the doubled cut is clear of noise coordinates.
    pub fn refit_support(&self) -> Vec<usize> {
        let cut = self.nu + self.nu;
        self.coords
            .iter()
            .zip(self.beta_bar_d.iter())
            .filter(|(_, b)| b.abs() > cut)
            .map(|(&v, _)| v)
            .collect()
    }

    /// Thresholded estimate as a `d`-vector, zero outside `coords`.
    pub fn thresholded_full(&self, d: usize) -> Array1<T> {
        let mut out = Array1::zeros(d);
        for (&v, &b) in self.coords.iter().zip(self.beta_thresholded.iter()) {
            out[v] = b;
        }
        out
    }
}

pub(crate) fn check_fits<T: Real>(fits: &[DebiasedFit<T>]) -> Result<()> {
    let first = fits.first().ok_or_else(|| Error::InvalidConfig("no shard results to aggregate".into()))?;
    for f in &fits[1..] {
        if f.dim != first.dim || f.coords != first.coords {
            return Err(Error::Dimension("shard results cover different coordinates".into()));
        }
    }
    Ok(())
}

pub(crate) fn total_obs<T: Real>(fits: &[DebiasedFit<T>]) -> usize {
    fits.iter().map(|f| f.n_obs).sum()
}

/// Mean shard variance `σ̄²`, if every shard carries one.
pub(crate) fn mean_sigma2<T: Real>(fits: &[DebiasedFit<T>]) -> Option<T> {
    let all: Option<Vec<T>> = fits.iter().map(|f| f.sigma2_hat).collect();
    all.map(|v| compensated_sum(v.iter().copied()) / T::of_usize(v.len()))
}

/// `β̄ᵈ = k⁻¹ Σ β̂ᵈ(D_j)` and `σ̄² = k⁻¹ Σ σ̂²(D_j)`, unthresholded (`ν = 0`).
pub fn aggregate_debiased<T: Real>(fits: &[DebiasedFit<T>]) -> Result<DcEstimate<T>> {
    check_fits(fits)?;
    let views: Vec<ArrayView1<'_, T>> = fits.iter().map(|f| f.beta_d.view()).collect();
    let beta_bar_d = compensated_mean(&views);
    Ok(DcEstimate {
        coords: fits[0].coords.clone(),
        beta_thresholded: beta_bar_d.clone(),
        support: fits[0].coords.clone(),
        beta_bar_d,
        nu: T::zero(),
        sigma_bar2: mean_sigma2(fits),
        theta_tilde_vv: None,
    })
}
