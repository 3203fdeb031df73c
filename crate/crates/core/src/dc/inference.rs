use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::aggregate::{check_fits, total_obs};
use crate::debias::DebiasedFit;
use crate::error::{Error, Result};
use crate::linalg::{compensated_sum, Dataset};
use crate::solvers::{gradient, hessian_column, ShardFit};
use crate::Real;

/// Levels at which `reject_at` is always reported.
pub const DEFAULT_LEVELS: [f64; 3] = [0.01, 0.05, 0.1];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMethod {
    WaldLinear,
    WaldGlm,
    Score,
}

impl TestMethod {
    pub fn name(self) -> &'static str {
        match self {
            TestMethod::WaldLinear => "wald-linear",
            TestMethod::WaldGlm => "wald-glm",
            TestMethod::Score => "score",
        }
    }
}

impl std::str::FromStr for TestMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wald-linear" => Ok(TestMethod::WaldLinear),
            "wald-glm" => Ok(TestMethod::WaldGlm),
            "score" => Ok(TestMethod::Score),
            other => Err(Error::InvalidConfig(format!("unknown test method `{other}`"))),
        }
    }
}

/// Two-sided normal test of `H₀: β_v = null_value`.
#[derive(Clone, Debug, PartialEq)]
pub struct TestResult<T> {
    pub coordinate: usize,
    pub statistic: T,
    pub p_value: f64,
    /// `(α, |S| > z_{1−α/2})` for each reported level.
    pub reject_at: Vec<(f64, bool)>,
    pub method: TestMethod,
    pub null_value: T,
}

impl<T: Real> TestResult<T> {
    pub fn new(coordinate: usize, statistic: T, method: TestMethod, null_value: T) -> Self {
        let s = statistic.as_f64();
        Self {
            coordinate,
            statistic,
            p_value: normal_p_value(s),
            reject_at: DEFAULT_LEVELS.iter().map(|&a| (a, s.abs() > critical_value(a))).collect(),
            method,
            null_value,
        }
    }

    /// Adds a level to `reject_at` if missing.
    pub fn with_level(mut self, alpha: f64) -> Self {
        if !self.reject_at.iter().any(|&(a, _)| a == alpha) {
            self.reject_at.push((alpha, self.statistic.as_f64().abs() > critical_value(alpha)));
        }
        self
    }

    pub fn rejects(&self, alpha: f64) -> bool {
        self.reject_at
            .iter()
            .find(|&&(a, _)| a == alpha)
            .map(|&(_, r)| r)
            .unwrap_or_else(|| self.statistic.as_f64().abs() > critical_value(alpha))
    }
}

/// `2(1 − Φ(|s|))`, computed as `erfc(|s|/√2)`; NaN maps to 1.
pub fn normal_p_value(s: f64) -> f64 {
    if s.is_nan() {
        return 1.0;
    }
    statrs::function::erf::erfc(s.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// `Φ⁻¹(1 − α/2)`.
pub fn critical_value(alpha: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - alpha / 2.0)
}

fn sqrt_n<T: Real>(n: usize) -> T {
    T::of_usize(n).sqrt()
}

/// `√n k⁻¹ Σ_j (β̂ᵈ_v(D_j) − β_H) / (σ̄ Q̂_v⁽ʲ⁾)`.
pub fn wald_linear<T: Real>(fits: &[DebiasedFit<T>], v: usize, beta_h: T) -> Result<TestResult<T>> {
    check_fits(fits)?;
    let sigma2 = super::aggregate::mean_sigma2(fits)
        .ok_or_else(|| Error::DegenerateVariance("shard fits carry no residual variance".into()))?;
    if !(sigma2 > T::zero()) {
        return Err(Error::DegenerateVariance(format!("σ̄² = {sigma2}")));
    }
    let sigma = sigma2.sqrt();
    let mut terms = Vec::with_capacity(fits.len());
    for (j, f) in fits.iter().enumerate() {
        let pos = f.position(v)?;
        let q = f
            .q
            .as_ref()
            .ok_or_else(|| Error::DegenerateVariance(format!("shard {j} has no Q̂")))?[pos];
        if !(q > T::zero()) {
            return Err(Error::DegenerateVariance(format!("Q̂_{v} = {q} on shard {j}")));
        }
        terms.push((f.beta_d[pos] - beta_h) / (sigma * q));
    }
    let mean = compensated_sum(terms.iter().copied()) / T::of_usize(fits.len());
    Ok(TestResult::new(v, sqrt_n::<T>(total_obs(fits)) * mean, TestMethod::WaldLinear, beta_h))
}

/// `√n k⁻¹ Σ_j (β̂ᵈ_v(D_j) − β_H) / √Θ̃_vv`. For the Gaussian family the
/// caller folds the noise variance into `theta_tilde_vv`.
pub fn wald_glm<T: Real>(fits: &[DebiasedFit<T>], theta_tilde_vv: T, v: usize, beta_h: T) -> Result<TestResult<T>> {
    check_fits(fits)?;
    if !(theta_tilde_vv > T::zero()) {
        return Err(Error::DegenerateVariance(format!("Θ̃_vv = {theta_tilde_vv}")));
    }
    let diffs = fits
        .iter()
        .map(|f| Ok(f.beta_d_at(v)? - beta_h))
        .collect::<Result<Vec<T>>>()?;
    let mean = compensated_sum(diffs.iter().copied()) / T::of_usize(fits.len());
    let s = sqrt_n::<T>(total_obs(fits)) * mean / theta_tilde_vv.sqrt();
    Ok(TestResult::new(v, s, TestMethod::WaldGlm, beta_h))
}

fn check_shards<T: Real>(shards: &[Dataset<T>], len: usize, v: usize) -> Result<usize> {
    let first = shards.first().ok_or_else(|| Error::InvalidConfig("no shards".into()))?;
    if shards.len() != len {
        return Err(Error::Dimension(format!("{} shards but {len} shard results", shards.len())));
    }
    let d = first.d();
    if shards.iter().any(|s| s.d() != d) {
        return Err(Error::Dimension("shards have different widths".into()));
    }
    if v >= d {
        return Err(Error::Index { index: v, len: d });
    }
    Ok(d)
}

fn check_len<T>(a: ArrayView1<'_, T>, d: usize) -> Result<()> {
    if a.len() != d {
        return Err(Error::Dimension(format!("vector of length {} where {d} expected", a.len())));
    }
    Ok(())
}

/// Decorrelated score `∇_vℓ − wᵀ∇_{−v}ℓ` on one shard, at `β̂` with
/// coordinate `v` pinned to `beta_h`. `w` is a full `d`-vector; its
/// `v` entry is ignored.
fn shard_score<T: Real>(shard: &Dataset<T>, beta: ArrayView1<'_, T>, w: ArrayView1<'_, T>, v: usize, beta_h: T) -> Result<T> {
    let mut b = beta.to_owned();
    b[v] = beta_h;
    let g = gradient(shard, b.view())?;
    let proj = compensated_sum(g.iter().zip(w.iter()).enumerate().filter(|&(i, _)| i != v).map(|(_, (&gi, &wi))| gi * wi));
    Ok(g[v] - proj)
}

/// Aggregated decorrelated score statistic `√n S̄(β_H) / √J̄`. `w_hats`
/// holds one full `d`-vector per shard (entry `v` ignored). For the
/// Gaussian family the caller folds the noise variance into `j_bar`.
pub fn score_statistic<T: Real>(
    shards: &[Dataset<T>],
    fits: &[ShardFit<T>],
    w_hats: &[Array1<T>],
    v: usize,
    beta_h: T,
    j_bar: T,
) -> Result<TestResult<T>> {
    let d = check_shards(shards, fits.len(), v)?;
    if w_hats.len() != shards.len() {
        return Err(Error::Dimension(format!("{} projection vectors for {} shards", w_hats.len(), shards.len())));
    }
    if !(j_bar > T::zero()) {
        return Err(Error::DegenerateInformation(j_bar.as_f64()));
    }
    let mut scores = Vec::with_capacity(shards.len());
    for ((s, f), w) in shards.iter().zip(fits).zip(w_hats) {
        check_len(f.beta.view(), d)?;
        check_len(w.view(), d)?;
        scores.push(shard_score(s, f.beta.view(), w.view(), v, beta_h)?);
    }
    let mean = compensated_sum(scores.iter().copied()) / T::of_usize(shards.len());
    let n: usize = shards.iter().map(Dataset::n).sum();
    Ok(TestResult::new(v, sqrt_n::<T>(n) * mean / j_bar.sqrt(), TestMethod::Score, beta_h))
}

/// `J̄_{v|−v} = k⁻¹ Σ_j [∇²_{vv}ℓ⁽ʲ⁾ − w̄ᵀ∇²_{−v,v}ℓ⁽ʲ⁾]` at `β̄` with
/// coordinate `v` replaced by `beta_bar_d_v`. Not checked for positivity.
pub fn conditional_information<T: Real>(
    shards: &[Dataset<T>],
    w_bar: ArrayView1<'_, T>,
    v: usize,
    beta_bar_d_v: T,
    beta_bar: ArrayView1<'_, T>,
) -> Result<T> {
    let d = check_shards(shards, shards.len(), v)?;
    check_len(w_bar, d)?;
    check_len(beta_bar, d)?;
    let mut b: Array1<T> = beta_bar.to_owned();
    b[v] = beta_bar_d_v;
    let mut terms = Vec::with_capacity(shards.len());
    for s in shards {
        let h = hessian_column(s, b.view(), v)?;
        let proj = compensated_sum(h.iter().zip(w_bar.iter()).enumerate().filter(|&(i, _)| i != v).map(|(_, (&hi, &wi))| hi * wi));
        terms.push(h[v] - proj);
    }
    Ok(compensated_sum(terms.iter().copied()) / T::of_usize(shards.len()))
}
