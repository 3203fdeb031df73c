use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg::{compensated_mean, Cholesky, Dataset, Family, Partition};
use crate::solvers::{fit_mle, SolverSettings};
use crate::Real;

fn ols<T: Real>(shard: &Dataset<T>, j: usize) -> Result<Array1<T>> {
    if shard.n() <= shard.d() {
        return Err(Error::SingularDesign { shard: j });
    }
    let x = shard.x();
    let xtx = x.t().dot(&x);
    let xty = x.t().dot(&shard.y());
    Cholesky::new(xtx.view())
        .map(|c| c.solve(xty.view()))
        .map_err(|_| Error::SingularDesign { shard: j })
}

fn mean_of<T: Real>(estimates: &[Array1<T>]) -> Array1<T> {
    let views: Vec<_> = estimates.iter().map(|e| e.view()).collect();
    compensated_mean(&views)
}

fn check_nonempty<T: Real>(shards: &[Dataset<T>]) -> Result<()> {
    if shards.is_empty() {
        return Err(Error::InvalidConfig("no shards".into()));
    }
    let d = shards[0].d();
    if shards.iter().any(|s| s.d() != d) {
        return Err(Error::Dimension("shards have different widths".into()));
    }
    Ok(())
}

/// Mean of per-shard least-squares estimates.
pub fn average_ols<T: Real>(shards: &[Dataset<T>]) -> Result<Array1<T>> {
    check_nonempty(shards)?;
    let fits = shards.iter().enumerate().map(|(j, s)| ols(s, j)).collect::<Result<Vec<_>>>()?;
    Ok(mean_of(&fits))
}

/// `(Σ_j X⁽ʲ⁾ᵀX⁽ʲ⁾)⁻¹ Σ_j X⁽ʲ⁾ᵀy⁽ʲ⁾`, which is the full-sample least-squares
/// estimate.
pub fn weighted_ols_aggregate<T: Real>(shards: &[Dataset<T>]) -> Result<Array1<T>> {
    check_nonempty(shards)?;
    let d = shards[0].d();
    let mut xtx = Array2::<T>::zeros((d, d));
    let mut xty = Array1::<T>::zeros(d);
    for s in shards {
        let x = s.x();
        xtx += &x.t().dot(&x);
        xty += &x.t().dot(&s.y());
    }
    Cholesky::new(xtx.view()).map(|c| c.solve(xty.view()))
}

/// Mean of per-shard unpenalized maximum likelihood estimates.
pub fn average_glm<T: Real>(shards: &[Dataset<T>], settings: &SolverSettings) -> Result<Array1<T>> {
    check_nonempty(shards)?;
    let mut fits = Vec::with_capacity(shards.len());
    for (j, s) in shards.iter().enumerate() {
        let fit = fit_mle(s, settings).map_err(|e| match e {
            Error::Singular => Error::SingularDesign { shard: j },
            other => other,
        })?;
        if !fit.converged {
            return Err(Error::NonConvergence(format!("shard {j} MLE")));
        }
        fits.push(fit.beta);
    }
    Ok(mean_of(&fits))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefitResult<T> {
    pub beta: Array1<T>,
    pub support: Vec<usize>,
    /// Set when the support was empty and no refit took place.
    pub empty_support: bool,
}

/// Averaged OLS (Gaussian) or MLE (logistic) on the columns in `support`,
/// embedded back into a `d`-vector.
pub fn refit<T: Real>(
    dataset: &Dataset<T>,
    partition: &Partition,
    support: &[usize],
    settings: &SolverSettings,
) -> Result<RefitResult<T>> {
    let d = dataset.d();
    if let Some(&v) = support.iter().find(|&&v| v >= d) {
        return Err(Error::Index { index: v, len: d });
    }
    if support.is_empty() {
        return Ok(RefitResult {
            beta: Array1::zeros(d),
            support: Vec::new(),
            empty_support: true,
        });
    }
    if support.len() >= partition.shard_size() {
        return Err(Error::InvalidConfig(format!(
            "support of size {} is not smaller than the shard size {}",
            support.len(),
            partition.shard_size()
        )));
    }
    let restricted = dataset.select_columns(support);
    let shards = partition.split(&restricted)?;
    let coef = match dataset.family() {
        Family::GaussianLinear => average_ols(&shards)?,
        Family::Logistic => average_glm(&shards, settings)?,
    };
    let mut beta = Array1::zeros(d);
    for (&v, &b) in support.iter().zip(coef.iter()) {
        beta[v] = b;
    }
    Ok(RefitResult {
        beta,
        support: support.to_vec(),
        empty_support: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Family;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Dataset<f64> {
        let x = Array2::from_shape_fn((n, d), |_| StandardNormal.sample(rng));
        let beta = Array1::from_shape_fn(d, |j| (j as f64 - 1.0) * 0.5);
        let e: Array1<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let y = x.dot(&beta) + e;
        Dataset::new(x, y, Family::GaussianLinear).unwrap()
    }

    fn normal_equations(ds: &Dataset<f64>) -> Array1<f64> {
        let x = ds.x();
        crate::linalg::lu_solve(x.t().dot(&x).view(), x.t().dot(&ds.y()).view()).unwrap()
    }

    #[test]
    fn single_shard_is_full_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ds = gaussian(30, 4, &mut rng);
        assert_abs_diff_eq!(average_ols(std::slice::from_ref(&ds)).unwrap(), normal_equations(&ds), epsilon = 1e-12);
    }

    #[test]
    fn orthonormal_shards() {
        // Columns e₁, e₂ padded: XᵀX = I so the OLS estimate is Xᵀy.
        let x = ndarray::array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
        let a = Dataset::new(x.clone(), ndarray::array![1.0, 2.0, 5.0], Family::GaussianLinear).unwrap();
        let b = Dataset::new(x, ndarray::array![3.0, -4.0, 1.0], Family::GaussianLinear).unwrap();
        assert_abs_diff_eq!(average_ols(&[a, b]).unwrap(), ndarray::array![2.0, -1.0], epsilon = 1e-14);
    }

    #[test]
    fn weighted_aggregate_is_full_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for seed in 0..50u64 {
            let k = rng.random_range(1..6);
            let nk = rng.random_range(8..30);
            let d = rng.random_range(1..6);
            let ds = gaussian(k * nk, d, &mut rng);
            let p = Partition::new(k * nk, k, seed).unwrap();
            let agg = weighted_ols_aggregate(&p.split(&ds).unwrap()).unwrap();
            assert_abs_diff_eq!(agg, normal_equations(&ds), epsilon = 1e-10);
        }
    }

    #[test]
    fn rank_deficient_shard_is_named() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let good = gaussian(10, 2, &mut rng);
        let x = ndarray::array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0], [1.0, 2.0]];
        let bad = Dataset::new(x, ndarray::array![1.0, 2.0, 3.0, 4.0], Family::GaussianLinear).unwrap();
        assert!(matches!(average_ols(&[good.clone(), bad.clone()]), Err(Error::SingularDesign { shard: 1 })));
        assert!(matches!(
            average_glm(&[good, bad], &SolverSettings::default()),
            Err(Error::SingularDesign { shard: 1 })
        ));
    }

    #[test]
    fn gaussian_glm_average_is_ols_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shards: Vec<_> = (0..3).map(|_| gaussian(25, 3, &mut rng)).collect();
        assert_abs_diff_eq!(
            average_glm(&shards, &SolverSettings::default()).unwrap(),
            average_ols(&shards).unwrap(),
            epsilon = 1e-9
        );
    }

    fn logistic(n: usize, beta: &Array1<f64>, rng: &mut ChaCha8Rng) -> Dataset<f64> {
        let x = Array2::from_shape_fn((n, beta.len()), |_| StandardNormal.sample(rng));
        let eta = x.dot(beta);
        let y = eta.mapv(|e| if rng.random::<f64>() < 1.0 / (1.0 + (-e).exp()) { 1.0 } else { 0.0 });
        Dataset::new(x, y, Family::Logistic).unwrap()
    }

    #[test]
    fn identical_shards_give_single_mle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ds = logistic(200, &ndarray::array![0.5, -1.0, 0.25], &mut rng);
        let s = SolverSettings::default();
        let one = fit_mle(&ds, &s).unwrap().beta;
        assert_abs_diff_eq!(average_glm(&[ds.clone(), ds.clone(), ds], &s).unwrap(), one, epsilon = 1e-15);
    }

    #[test]
    fn logistic_average_is_close_to_full_mle() {
        let beta = ndarray::array![0.5, -0.5, 0.25, 0.0, 1.0];
        let s = SolverSettings::default();
        let mut wins = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let ds = logistic(5000, &beta, &mut rng);
            let full = fit_mle(&ds, &s).unwrap().beta;
            let avg = average_glm(&Partition::new(5000, 5, seed).unwrap().split(&ds).unwrap(), &s).unwrap();
            let gap = (&avg - &full).mapv(|v| v * v).sum().sqrt();
            let err = (&full - &beta).mapv(|v| v * v).sum().sqrt();
            wins += usize::from(gap < err);
        }
        assert!(wins >= 90, "{wins}/100");
    }

    #[test]
    fn refit_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((40, 6), |_| StandardNormal.sample(&mut rng));
        let beta = ndarray::array![2.0, 0.0, -1.0, 0.0, 0.0, 0.5];
        let ds = Dataset::new(x.clone(), x.dot(&beta), Family::GaussianLinear).unwrap();
        let p = Partition::new(40, 4, 9).unwrap();
        let s = SolverSettings::default();
        let r = refit(&ds, &p, &[0, 2, 5], &s).unwrap();
        assert_abs_diff_eq!(r.beta, beta, epsilon = 1e-10);

        let e = refit(&ds, &p, &[], &s).unwrap();
        assert!(e.empty_support);
        assert_eq!(e.beta, Array1::zeros(6));

        assert!(matches!(refit(&ds, &Partition::new(40, 8, 0).unwrap(), &[0, 1, 2, 3, 4], &s), Err(Error::InvalidConfig(_))));

        let noisy = gaussian(40, 6, &mut rng);
        let all: Vec<usize> = (0..6).collect();
        let full = refit(&noisy, &Partition::new(40, 1, 0).unwrap(), &all, &s).unwrap();
        assert_abs_diff_eq!(full.beta, normal_equations(&noisy), epsilon = 1e-10);
    }
}
