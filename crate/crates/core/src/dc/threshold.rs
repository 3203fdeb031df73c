use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{compensated_mean, Dataset};
use crate::solvers::ShardFit;
use crate::Real;

/// `T_ν(β)_j = β_j 𝟙{|β_j| ≥ ν}`.
pub fn hard_threshold<T: Real>(beta: ArrayView1<'_, T>, nu: T) -> Array1<T> {
    beta.mapv(|b| if b.abs() >= nu { b } else { T::zero() })
}

/// Gaussian multiplier bootstrap for the threshold `ν₀ = c(α)/√n`, where
/// `c(α)` is the empirical `(1 − α)`-quantile over `n_draws` replications of
/// `W₀ = max_ℓ |k^{−1/2} Σ_j n_k^{−1/2} b_ℓ⁽ʲ⁾ᵀ(ε̂⁽ʲ⁾ ∘ ξ⁽ʲ⁾)|`.
///
/// `b_mats[j]` is the `n_k × m` matrix of debiasing weights on shard `j`
/// (one column per coordinate). Replication `r` draws its multipliers from
/// stream `r` of a ChaCha8 generator seeded with `seed`.
pub fn bootstrap_threshold<T: Real>(
    shards: &[Dataset<T>],
    fits: &[ShardFit<T>],
    b_mats: &[ArrayView2<'_, T>],
    alpha: f64,
    n_draws: usize,
    seed: u64,
) -> Result<T> {
    if shards.is_empty() || shards.len() != fits.len() || shards.len() != b_mats.len() {
        return Err(Error::Dimension(format!(
            "{} shards, {} fits, {} weight matrices",
            shards.len(),
            fits.len(),
            b_mats.len()
        )));
    }
    let residuals = shards
        .iter()
        .zip(fits)
        .map(|(s, f)| {
            if f.beta.len() != s.d() {
                return Err(Error::Dimension("fit and shard widths differ".into()));
            }
            Ok(&s.y() - &s.x().dot(&f.beta))
        })
        .collect::<Result<Vec<_>>>()?;
    let views: Vec<_> = residuals.iter().map(|r| r.view()).collect();
    let c = bootstrap_quantile(&views, b_mats, alpha, n_draws, seed)?;
    let n: usize = shards.iter().map(Dataset::n).sum();
    Ok(c / T::of_usize(n).sqrt())
}

/// `c(α)` from residual vectors and weight matrices.
pub(crate) fn bootstrap_quantile<T: Real>(
    residuals: &[ArrayView1<'_, T>],
    b_mats: &[ArrayView2<'_, T>],
    alpha: f64,
    n_draws: usize,
    seed: u64,
) -> Result<T> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("bootstrap level must lie in (0, 1), got {alpha}")));
    }
    if n_draws < 100 {
        return Err(Error::InvalidConfig(format!("bootstrap needs at least 100 draws, got {n_draws}")));
    }
    let m = b_mats[0].ncols();
    for (r, b) in residuals.iter().zip(b_mats) {
        if b.nrows() != r.len() || b.ncols() != m {
            return Err(Error::Dimension(format!(
                "weight matrix is {}x{}, residual has {} entries",
                b.nrows(),
                b.ncols(),
                r.len()
            )));
        }
    }
    let n: usize = residuals.iter().map(|r| r.len()).sum();

    let mut xi = Array2::<T>::zeros((n_draws, n));
    for (r, mut row) in xi.axis_iter_mut(Axis(0)).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        for e in row.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *e = T::of(z);
        }
    }

    let mut acc = Array2::<T>::zeros((n_draws, m));
    let mut offset = 0;
    for (r, b) in residuals.iter().zip(b_mats) {
        let nk = r.len();
        let mut block = xi.slice(s![.., offset..offset + nk]).to_owned();
        for mut row in block.rows_mut() {
            row *= r;
        }
        let scale = T::one() / T::of_usize(nk.max(1)).sqrt();
        acc.scaled_add(scale, &block.dot(b));
        offset += nk;
    }
    let k_scale = T::one() / T::of_usize(residuals.len()).sqrt();
    let mut maxima: Vec<T> = acc
        .rows()
        .into_iter()
        .map(|row| row.iter().fold(T::zero(), |a, &v| a.max(v.abs())) * k_scale)
        .collect();
    maxima.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let idx = ((1.0 - alpha) * n_draws as f64).ceil() as usize;
    Ok(maxima[idx.clamp(1, n_draws) - 1])
}

/// Diagonal of `T_ζ(k⁻¹ Σ_j Θ̂⁽ʲ⁾)` for square shard matrices.
pub fn theta_tilde<T: Real>(mats: &[ArrayView2<'_, T>], zeta: T) -> Result<Array1<T>> {
    let first = mats.first().ok_or_else(|| Error::InvalidConfig("no matrices to average".into()))?;
    let d = first.nrows();
    if mats.iter().any(|m| m.dim() != (d, d)) {
        return Err(Error::Dimension("precision matrices differ in shape or are not square".into()));
    }
    let diags: Vec<Array1<T>> = mats.iter().map(|m| m.diag().to_owned()).collect();
    let views: Vec<_> = diags.iter().map(|v| v.view()).collect();
    Ok(hard_threshold(compensated_mean(&views).view(), zeta))
}

/// As [`theta_tilde`] for row blocks: `rows[j]` holds the rows of `Θ̂⁽ʲ⁾`
/// for `coords`, and the result is aligned with `coords`.
pub fn theta_tilde_rows<T: Real>(rows: &[ArrayView2<'_, T>], coords: &[usize], zeta: T) -> Result<Array1<T>> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("no matrices to average".into()));
    }
    let mut diags = Vec::with_capacity(rows.len());
    for r in rows {
        if r.nrows() != coords.len() {
            return Err(Error::Dimension(format!("{} rows for {} coordinates", r.nrows(), coords.len())));
        }
        if let Some(&v) = coords.iter().find(|&&v| v >= r.ncols()) {
            return Err(Error::Index { index: v, len: r.ncols() });
        }
        diags.push(Array1::from_shape_fn(coords.len(), |i| r[[i, coords[i]]]));
    }
    let views: Vec<_> = diags.iter().map(|v| v.view()).collect();
    Ok(hard_threshold(compensated_mean(&views).view(), zeta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Family;
    use crate::solvers::PenaltyKind;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn threshold_examples() {
        let b = array![3.0, -0.1, 0.2];
        assert_eq!(hard_threshold(b.view(), 0.0), b);
        assert_eq!(hard_threshold(b.view(), 0.2), array![3.0, 0.0, 0.2]);
    }

    #[test]
    fn threshold_matches_comprehension() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let len = rng.random_range(1..20);
            let b: Vec<f64> = (0..len).map(|_| rng.random_range(-2.0..2.0)).collect();
            let nu = if rng.random_bool(0.2) { b[0].abs() } else { rng.random_range(0.0..1.5) };
            let oracle: Vec<f64> = b.iter().map(|&x| if x.abs() >= nu { x } else { 0.0 }).collect();
            assert_eq!(hard_threshold(Array1::from(b).view(), nu).to_vec(), oracle);
        }
    }

    proptest! {
        #[test]
        fn thresholded_nonzeros_exceed_nu(b in proptest::collection::vec(-5.0f64..5.0, 1..30), nu in 0.0f64..3.0) {
            let out = hard_threshold(Array1::from(b.clone()).view(), nu);
            for (o, x) in out.iter().zip(&b) {
                prop_assert!(*o == 0.0 || o.abs() >= nu);
                prop_assert_eq!(*o != 0.0, x.abs() >= nu && *x != 0.0);
            }
        }
    }

    fn zero_fit(d: usize) -> ShardFit<f64> {
        ShardFit {
            beta: Array1::zeros(d),
            lambda: 0.0,
            penalty: PenaltyKind::L1,
            loss_value: 0.0,
            objective: 0.0,
            iterations: 0,
            converged: true,
            kkt_violation: 0.0,
            objective_trace: Vec::new(),
        }
    }

    fn instance(n: usize, seed: u64) -> (Dataset<f64>, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 2), |_| StandardNormal.sample(&mut rng));
        let y: Array1<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b = Array2::from_shape_fn((n, 2), |(i, j)| x[[i, j]] + 0.5 * x[[i, 1 - j]]);
        (Dataset::new(x, y, Family::GaussianLinear).unwrap(), b)
    }

    #[test]
    fn zero_residuals_give_zero_threshold() {
        let (ds, b) = instance(20, 0);
        let ds = ds.with_response(Array1::zeros(20)).unwrap();
        let nu = bootstrap_threshold(&[ds], &[zero_fit(2)], &[b.view()], 0.05, 200, 3).unwrap();
        assert_eq!(nu, 0.0);
    }

    #[test]
    fn deterministic_in_seed_and_validated() {
        let (ds, b) = instance(20, 1);
        let run = |seed, draws| bootstrap_threshold(std::slice::from_ref(&ds), &[zero_fit(2)], &[b.view()], 0.05, draws, seed);
        assert_eq!(run(7, 300).unwrap(), run(7, 300).unwrap());
        assert_ne!(run(7, 300).unwrap(), run(8, 300).unwrap());
        assert!(matches!(run(7, 99), Err(Error::InvalidConfig(_))));
    }

    /// `P(|Z₁| ≤ c, |Z₂| ≤ c)` for a centred bivariate normal, by Simpson's
    /// rule over `z₁` with the exact conditional law of `Z₂`.
    fn box_probability(cov: &Array2<f64>, c: f64) -> f64 {
        let std = Normal::standard();
        let s1 = cov[[0, 0]].sqrt();
        let slope = cov[[0, 1]] / cov[[0, 0]];
        let cond_sd = (cov[[1, 1]] - cov[[0, 1]] * slope).sqrt();
        let m = 4000;
        let h = 2.0 * c / m as f64;
        let f = |z1: f64| {
            let mu = slope * z1;
            let dens = (-0.5 * (z1 / s1).powi(2)).exp() / (s1 * (2.0 * std::f64::consts::PI).sqrt());
            dens * (std.cdf((c - mu) / cond_sd) - std.cdf((-c - mu) / cond_sd))
        };
        let mut total = f(-c) + f(c);
        for i in 1..m {
            total += f(-c + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        total * h / 3.0
    }

    #[test]
    fn quantile_matches_bivariate_normal_max() {
        let n = 20;
        let (ds, b) = instance(n, 11);
        let eps = ds.y().to_owned();
        // W₀ = max |Z| with Z ~ N(0, Bᵀ diag(ε²) B / n).
        let mut bw = b.clone();
        for (mut row, &e) in bw.rows_mut().into_iter().zip(eps.iter()) {
            row *= e * e;
        }
        let cov = b.t().dot(&bw) / n as f64;
        let target = 0.95;
        let (mut lo, mut hi) = (0.0, 20.0 * cov.diag().iter().cloned().fold(0.0, f64::max).sqrt());
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if box_probability(&cov, mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let exact = 0.5 * (lo + hi);
        let c = bootstrap_quantile(&[eps.view()], &[b.view()], 0.05, 50_000, 123).unwrap();
        assert!((c - exact).abs() / exact < 0.02, "bootstrap {c}, exact {exact}");
    }

    #[test]
    fn theta_tilde_examples() {
        let a = array![[2.0, 0.1], [0.1, 0.5]];
        assert_eq!(theta_tilde(&[a.view()], 0.0).unwrap(), array![2.0, 0.5]);
        let eye = Array2::<f64>::eye(3);
        assert_eq!(theta_tilde(&[eye.view(), eye.view()], 1.0).unwrap(), Array1::ones(3));
        assert!(theta_tilde(&[a.view(), eye.view()], 0.0).is_err());
    }

    #[test]
    fn theta_tilde_matches_mean_then_threshold() {
        // Dyadic entries keep every partial sum exact.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let mats: Vec<Array2<f64>> = (0..3)
                .map(|_| Array2::from_shape_fn((4, 4), |_| rng.random_range(-64i32..64) as f64 / 64.0))
                .collect();
            let zeta = rng.random_range(0i32..32) as f64 / 64.0;
            let mean = (&mats[0] + &mats[1] + &mats[2]) / 3.0;
            let oracle: Array1<f64> = mean.diag().mapv(|t| if t.abs() >= zeta { t } else { 0.0 });
            let views: Vec<_> = mats.iter().map(|m| m.view()).collect();
            assert_eq!(theta_tilde(&views, zeta).unwrap(), oracle);
            let rows: Vec<_> = mats.iter().map(|m| m.slice(s![1..3, ..]).to_owned()).collect();
            let row_views: Vec<_> = rows.iter().map(|m| m.view()).collect();
            assert_eq!(theta_tilde_rows(&row_views, &[1, 2], zeta).unwrap(), oracle.slice(s![1..3]).to_owned());
        }
    }
}
