use ndarray::{Array1, Array2, ArrayView2};

use super::DebiasedFit;
use crate::error::{Error, Result};
use crate::linalg::Dataset;
use crate::solvers::{debias_weights_for, DebiasWeights, ShardFit};
use crate::Real;

fn check_fit<T: Real>(shard: &Dataset<T>, fit: &ShardFit<T>) -> Result<()> {
    if fit.beta.len() != shard.d() {
        return Err(Error::Dimension(format!(
            "fit has {} coefficients, shard has {} columns",
            fit.beta.len(),
            shard.d()
        )));
    }
    Ok(())
}

/// `σ̂² = (1/n_k) Σ (y_i − x_iᵀβ̂)²`.
pub fn residual_variance<T: Real>(shard: &Dataset<T>, fit: &ShardFit<T>) -> Result<T> {
    check_fit(shard, fit)?;
    let r = &shard.y() - &shard.x().dot(&fit.beta);
    Ok(r.dot(&r) / T::of_usize(shard.n().max(1)))
}

pub fn debias_linear<T: Real>(shard: &Dataset<T>, fit: &ShardFit<T>, theta1: T, theta2: T) -> Result<DebiasedFit<T>> {
    let coords: Vec<usize> = (0..shard.d()).collect();
    debias_linear_for(shard, fit, &coords, theta1, theta2)
}

/// Debiased estimate `β̂_v + b_vᵀ(y − Xβ̂)/n_k` for the listed coordinates.
pub fn debias_linear_for<T: Real>(
    shard: &Dataset<T>,
    fit: &ShardFit<T>,
    coords: &[usize],
    theta1: T,
    theta2: T,
) -> Result<DebiasedFit<T>> {
    check_fit(shard, fit)?;
    let weights = debias_weights_for(shard.x(), coords, theta1, theta2)?;
    debias_with_weights(shard, fit, &weights)
}

pub fn debias_with_weights<T: Real>(shard: &Dataset<T>, fit: &ShardFit<T>, weights: &DebiasWeights<T>) -> Result<DebiasedFit<T>> {
    check_fit(shard, fit)?;
    if weights.b.nrows() != shard.n() {
        return Err(Error::Dimension(format!(
            "weights have {} rows, shard has {}",
            weights.b.nrows(),
            shard.n()
        )));
    }
    let n = T::of_usize(shard.n());
    let r = &shard.y() - &shard.x().dot(&fit.beta);
    let correction = weights.b.t().dot(&r) / n;
    let beta_d = Array1::from_iter(weights.coords.iter().zip(correction.iter()).map(|(&v, &c)| fit.beta[v] + c));
    Ok(DebiasedFit {
        coords: weights.coords.clone(),
        dim: shard.d(),
        n_obs: shard.n(),
        beta_lambda: fit.beta.clone(),
        beta_d,
        q: Some(weights.q()),
        theta_rows: None,
        sigma2_hat: Some(r.dot(&r) / n),
        flags: weights.flags.clone(),
        b: Some(weights.b.clone()),
    })
}

/// `β̂ + M Xᵀ(y − Xβ̂)/n_k` for an explicit precision surrogate whose rows
/// correspond to `coords`.
pub fn debias_with_precision<T: Real>(
    shard: &Dataset<T>,
    fit: &ShardFit<T>,
    coords: &[usize],
    m: ArrayView2<'_, T>,
) -> Result<DebiasedFit<T>> {
    check_fit(shard, fit)?;
    if m.nrows() != coords.len() || m.ncols() != shard.d() {
        return Err(Error::Dimension(format!(
            "precision rows are {}x{}, expected {}x{}",
            m.nrows(),
            m.ncols(),
            coords.len(),
            shard.d()
        )));
    }
    let n = T::of_usize(shard.n());
    let r = &shard.y() - &shard.x().dot(&fit.beta);
    let score = shard.x().t().dot(&r) / n;
    let beta_d = Array1::from_iter(coords.iter().zip(m.rows()).map(|(&v, row)| fit.beta[v] + row.dot(&score)));
    let b: Array2<T> = shard.x().dot(&m.t());
    let q = Array1::from_iter(b.columns().into_iter().map(|c| (c.dot(&c) / n).sqrt()));
    Ok(DebiasedFit {
        coords: coords.to_vec(),
        dim: shard.d(),
        n_obs: shard.n(),
        beta_lambda: fit.beta.clone(),
        beta_d,
        q: Some(q),
        theta_rows: None,
        sigma2_hat: Some(r.dot(&r) / n),
        flags: vec![false; coords.len()],
        b: Some(b),
    })
}
