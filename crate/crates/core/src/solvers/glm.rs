use ndarray::Array1;

use super::loss::{gradient_from_eta, nll_from_eta, weights_from_eta};
use super::SolverSettings;
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Dataset, Gram};
use crate::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct MleFit<T> {
    pub beta: Array1<T>,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_sup: T,
}

const MAX_NEWTON: usize = 100;

/// Unpenalized maximum likelihood by damped Newton steps. A singular
/// information matrix is reported as [`Error::Singular`].
pub fn fit_mle<T: Real>(ds: &Dataset<T>, settings: &SolverSettings) -> Result<MleFit<T>> {
    settings.validate()?;
    if ds.n() <= ds.d() {
        return Err(Error::Singular);
    }
    let tol = T::of(settings.tol);
    let x = ds.x();
    let mut beta = Array1::zeros(ds.d());
    let mut eta = x.dot(&beta);
    let mut f = nll_from_eta(ds.family(), ds.y(), eta.view());
    let mut grad = gradient_from_eta(ds, eta.view());
    let sup = |g: &Array1<T>| g.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    for it in 1..=MAX_NEWTON {
        let w = weights_from_eta(ds.family(), eta.view());
        let info = Gram::dense(x, w.as_ref().map(|w| w.view())).to_dense();
        let step = Cholesky::new(info.view())?.solve(grad.view());
        let mut t = T::one();
        let mut next = None;
        for _ in 0..40 {
            let cand = &beta - &(&step * t);
            let e = x.dot(&cand);
            let fc = nll_from_eta(ds.family(), ds.y(), e.view());
            if fc <= f + T::epsilon() * f.abs().max(T::one()) * T::of(16.0) {
                next = Some((cand, e, fc));
                break;
            }
            t *= T::of(0.5);
        }
        let Some((cand, e, fc)) = next else {
            return Ok(MleFit {
                gradient_sup: sup(&grad),
                beta,
                iterations: it,
                converged: false,
            });
        };
        let change = (&cand - &beta).iter().fold(T::zero(), |m, v| m.max(v.abs()));
        beta = cand;
        eta = e;
        f = fc;
        grad = gradient_from_eta(ds, eta.view());
        let gs = sup(&grad);
        if change <= tol || gs <= tol {
            return Ok(MleFit {
                converged: gs <= T::of(10.0) * tol || change <= tol,
                gradient_sup: gs,
                beta,
                iterations: it,
            });
        }
        if !f.is_finite() {
            break;
        }
    }
    Ok(MleFit {
        gradient_sup: sup(&grad),
        beta,
        iterations: MAX_NEWTON,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cholesky_solve;
    use crate::Family;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gaussian_mle_is_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((30, 4), |_| rng.random_range(-1.0..1.0));
        let y = Array1::from_shape_fn(30, |_| rng.random_range(-1.0..1.0));
        let ds = Dataset::new(x.clone(), y.clone(), Family::GaussianLinear).unwrap();
        let fit = fit_mle(&ds, &SolverSettings::default()).unwrap();
        let ols = cholesky_solve(x.t().dot(&x).view(), x.t().dot(&y).view()).unwrap();
        assert_abs_diff_eq!(fit.beta, ols, epsilon = 1e-10);
        assert!(fit.converged);
    }

    #[test]
    fn logistic_mle_zeroes_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Array2::from_shape_fn((300, 3), |_| rng.random_range(-1.0..1.0));
        let beta = Array1::from(vec![1.0, -0.5, 0.25]);
        let eta = x.dot(&beta);
        let y = eta.mapv(|e: f64| f64::from(u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-e).exp()))));
        let ds = Dataset::new(x, y, Family::Logistic).unwrap();
        let fit = fit_mle(&ds, &SolverSettings::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.gradient_sup < 1e-9);
    }

    #[test]
    fn rank_deficient_is_singular() {
        let x = Array2::from_shape_fn((10, 2), |(i, _)| i as f64);
        let ds = Dataset::new(x, Array1::zeros(10), Family::GaussianLinear).unwrap();
        assert!(matches!(fit_mle(&ds, &SolverSettings::default()), Err(Error::Singular)));
    }
}
