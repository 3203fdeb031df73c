//! Canonical-link GLM losses: `ℓ(β) = (1/n) Σ [b(x_iᵀβ) − y_i x_iᵀβ]`
//! with `b(η) = η²/2` (Gaussian, shifted by `y²/2` so that the loss is the
//! usual half mean squared error) and `b(η) = log(1 + e^η)` (logistic).

use ndarray::{Array1, Array2, ArrayView1, Zip};

use crate::error::{Error, Result};
use crate::linalg::{Dataset, Family, Gram};
use crate::Real;

pub(crate) fn check_dim<T: Real>(ds: &Dataset<T>, beta: ArrayView1<'_, T>) -> Result<()> {
    if beta.len() != ds.d() {
        return Err(Error::Dimension(format!(
            "coefficient vector has {} entries, design has {} columns",
            beta.len(),
            ds.d()
        )));
    }
    Ok(())
}

/// `log(1 + e^η)` without overflow.
pub(crate) fn softplus<T: Real>(eta: T) -> T {
    if eta > T::zero() {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

pub(crate) fn sigmoid<T: Real>(eta: T) -> T {
    if eta >= T::zero() {
        T::one() / (T::one() + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (T::one() + e)
    }
}

/// Mean function `b'(η)`.
pub fn mean_response<T: Real>(family: Family, eta: ArrayView1<'_, T>) -> Array1<T> {
    match family {
        Family::GaussianLinear => eta.to_owned(),
        Family::Logistic => eta.mapv(sigmoid),
    }
}

pub(crate) fn nll_from_eta<T: Real>(family: Family, y: ArrayView1<'_, T>, eta: ArrayView1<'_, T>) -> T {
    let n = T::of_usize(y.len().max(1));
    let half = T::of(0.5);
    let total: T = match family {
        Family::GaussianLinear => Zip::from(&y).and(&eta).fold(T::zero(), |acc, &yi, &ei| {
            let r = yi - ei;
            acc + half * r * r
        }),
        Family::Logistic => Zip::from(&y)
            .and(&eta)
            .fold(T::zero(), |acc, &yi, &ei| acc + softplus(ei) - yi * ei),
    };
    total / n
}

/// `−(1/n) Xᵀ (y − μ)` from a precomputed linear predictor.
pub(crate) fn gradient_from_eta<T: Real>(ds: &Dataset<T>, eta: ArrayView1<'_, T>) -> Array1<T> {
    let n = T::of_usize(ds.n().max(1));
    let resid = &ds.y() - &mean_response(ds.family(), eta);
    ds.x().t().dot(&resid) / (-n)
}

pub(crate) fn weights_from_eta<T: Real>(family: Family, eta: ArrayView1<'_, T>) -> Option<Array1<T>> {
    match family {
        Family::GaussianLinear => None,
        Family::Logistic => Some(eta.mapv(|e| {
            let m = sigmoid(e);
            m * (T::one() - m)
        })),
    }
}

pub fn negative_log_likelihood<T: Real>(ds: &Dataset<T>, beta: ArrayView1<'_, T>) -> Result<T> {
    check_dim(ds, beta)?;
    Ok(nll_from_eta(ds.family(), ds.y(), ds.x().dot(&beta).view()))
}

pub fn gradient<T: Real>(ds: &Dataset<T>, beta: ArrayView1<'_, T>) -> Result<Array1<T>> {
    check_dim(ds, beta)?;
    Ok(gradient_from_eta(ds, ds.x().dot(&beta).view()))
}

/// Diagonal `b''(x_iᵀβ)` of the Hessian sandwich `Xᵀ D X / n`.
pub fn hessian_weights<T: Real>(ds: &Dataset<T>, beta: ArrayView1<'_, T>) -> Result<Array1<T>> {
    check_dim(ds, beta)?;
    Ok(weights_from_eta(ds.family(), ds.x().dot(&beta).view()).unwrap_or_else(|| Array1::ones(ds.n())))
}

pub fn hessian<T: Real>(ds: &Dataset<T>, beta: ArrayView1<'_, T>) -> Result<Array2<T>> {
    check_dim(ds, beta)?;
    let w = weights_from_eta(ds.family(), ds.x().dot(&beta).view());
    Ok(Gram::dense(ds.x(), w.as_ref().map(|w| w.view())).to_dense())
}

pub fn hessian_column<T: Real>(ds: &Dataset<T>, beta: ArrayView1<'_, T>, j: usize) -> Result<Array1<T>> {
    check_dim(ds, beta)?;
    if j >= ds.d() {
        return Err(Error::Index { index: j, len: ds.d() });
    }
    let x = ds.x();
    let xj = x.column(j);
    let v = match weights_from_eta(ds.family(), x.dot(&beta).view()) {
        Some(w) => &xj * &w,
        None => xj.to_owned(),
    };
    Ok(x.t().dot(&v) / T::of_usize(ds.n().max(1)))
}
