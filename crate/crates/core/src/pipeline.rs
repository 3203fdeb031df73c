//! End-to-end divide-and-conquer procedures built from the shard-level
//! pieces: fit every shard once, then debias, test or estimate.

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dc::{
    aggregate_debiased, bootstrap_threshold, conditional_information, score_statistic, theta_tilde_rows, wald_glm,
    wald_linear, DcEstimate, TestMethod, TestResult,
};
use crate::debias::{debias_linear_for, desparsify_glm, nodewise_lasso_for, DebiasedFit};
use crate::error::{Error, Result};
use crate::linalg::{compensated_mean, Dataset, Family, Gram, Partition, SymOperator};
use crate::solvers::{dantzig_select_op, fit_penalized, hessian_weights, Penalty, PenaltyKind, ShardFit, SolverSettings};
use crate::Real;

/// Rule for the hard threshold `ν`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum ThresholdRule {
    /// Multiplier bootstrap quantile at level `alpha`.
    Bootstrap { alpha: f64, n_draws: usize },
    /// `ν = c₀ √(log d / n)`.
    Fixed { c0: f64 },
}

impl Default for ThresholdRule {
    fn default() -> Self {
        ThresholdRule::Bootstrap { alpha: 0.05, n_draws: 500 }
    }
}

/// Tuning constants. Every tuning parameter is a constant times its rate,
/// with `r = √(k log d / n)`: `λ = c_λ r`, `θ₁ = c₁ r`,
/// `θ₂ = c₂ √(n/k) / log n`, `λ_v = c_v λ`, `μ = c_μ r` and
/// `ζ = c_ζ √(log d / n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub lambda_scale: f64,
    pub penalty: PenaltyKind,
    pub theta1_scale: f64,
    pub theta2_scale: f64,
    pub nodewise_scale: f64,
    pub dantzig_scale: f64,
    pub zeta_scale: f64,
    pub threshold: ThresholdRule,
    pub settings: SolverSettings,
}

impl InferenceConfig {
    pub fn for_family(family: Family) -> Self {
        Self {
            lambda_scale: match family {
                Family::GaussianLinear => 0.75,
                Family::Logistic => 0.25,
            },
            penalty: PenaltyKind::L1,
            theta1_scale: 1.0,
            theta2_scale: 1.0,
            nodewise_scale: 1.0,
            dantzig_scale: 1.0,
            zeta_scale: 1.1,
            threshold: ThresholdRule::default(),
            settings: SolverSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_scale", self.lambda_scale),
            ("theta1_scale", self.theta1_scale),
            ("theta2_scale", self.theta2_scale),
            ("nodewise_scale", self.nodewise_scale),
            ("dantzig_scale", self.dantzig_scale),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.zeta_scale >= 0.0) {
            return Err(Error::InvalidConfig(format!("zeta_scale must be nonnegative, got {}", self.zeta_scale)));
        }
        match self.threshold {
            ThresholdRule::Bootstrap { alpha, n_draws } => {
                if !(alpha > 0.0 && alpha < 1.0) || n_draws < 100 {
                    return Err(Error::InvalidConfig(format!(
                        "bootstrap threshold needs 0 < alpha < 1 and at least 100 draws, got {alpha} and {n_draws}"
                    )));
                }
            }
            ThresholdRule::Fixed { c0 } if !(c0 >= 0.0) => {
                return Err(Error::InvalidConfig(format!("threshold constant must be nonnegative, got {c0}")));
            }
            ThresholdRule::Fixed { .. } => {}
        }
        self.settings.validate()
    }
}

/// `√(k log d / n)`.
pub fn rate(n: usize, d: usize, k: usize) -> f64 {
    (k as f64 * (d.max(2) as f64).ln() / n as f64).sqrt()
}

/// A partitioned dataset with one penalized fit per shard.
#[derive(Clone, Debug)]
pub struct ShardedFits<T> {
    pub n: usize,
    pub d: usize,
    pub family: Family,
    pub shards: Vec<Dataset<T>>,
    pub fits: Vec<ShardFit<T>>,
    pub lambda: T,
}

impl<T: Real> ShardedFits<T> {
    pub fn k(&self) -> usize {
        self.shards.len()
    }

    fn rate(&self) -> T {
        T::of(rate(self.n, self.d, self.k()))
    }

    /// `k⁻¹ Σ_j β̂^λ(D_j)`, the naive average of the penalized fits.
    pub fn mean_penalized(&self) -> Array1<T> {
        let views: Vec<_> = self.fits.iter().map(|f| f.beta.view()).collect();
        compensated_mean(&views)
    }
}

/// Splits `dataset` by `partition` and fits every shard at
/// `λ = c_λ √(k log d / n)`.
pub fn fit_shards<T: Real>(dataset: &Dataset<T>, partition: &Partition, cfg: &InferenceConfig) -> Result<ShardedFits<T>> {
    cfg.validate()?;
    let shards = partition.split(dataset)?;
    let lambda = T::of(cfg.lambda_scale * rate(dataset.n(), dataset.d(), partition.k()));
    let penalty = match cfg.penalty {
        PenaltyKind::L1 => Penalty::l1(lambda),
        PenaltyKind::Scad => Penalty::scad(lambda, T::of(Penalty::<T>::DEFAULT_SCAD_A)),
        PenaltyKind::Mcp => Penalty::mcp(lambda, T::of(Penalty::<T>::DEFAULT_MCP_B)),
    };
    let fits = shards
        .par_iter()
        .map(|s| fit_penalized(s, &penalty, &cfg.settings))
        .collect::<Result<Vec<_>>>()?;
    Ok(ShardedFits {
        n: dataset.n(),
        d: dataset.d(),
        family: dataset.family(),
        shards,
        fits,
        lambda,
    })
}

/// Linear-model debiasing with the `b_v` program on every shard.
pub fn debias_shards_linear<T: Real>(sf: &ShardedFits<T>, coords: &[usize], cfg: &InferenceConfig) -> Result<Vec<DebiasedFit<T>>> {
    if sf.family != Family::GaussianLinear {
        return Err(Error::InvalidConfig("the linear Wald construction needs a Gaussian response".into()));
    }
    let theta1 = T::of(cfg.theta1_scale) * sf.rate();
    let nk = sf.n / sf.k();
    let theta2 = T::of(cfg.theta2_scale * (nk as f64).sqrt() / (sf.n.max(3) as f64).ln());
    sf.shards
        .iter()
        .zip(&sf.fits)
        .map(|(s, f)| debias_linear_for(s, f, coords, theta1, theta2))
        .collect()
}

/// Nodewise desparsification on every shard.
pub fn desparsify_shards<T: Real>(sf: &ShardedFits<T>, coords: &[usize], cfg: &InferenceConfig) -> Result<Vec<DebiasedFit<T>>> {
    let lambda_v = T::of(cfg.nodewise_scale) * sf.lambda;
    sf.shards
        .iter()
        .zip(&sf.fits)
        .map(|(s, f)| {
            let nw = nodewise_lasso_for(s, f, coords, lambda_v, &cfg.settings)?;
            desparsify_glm(s, f, &nw)
        })
        .collect()
}

/// Dantzig projection `ŵ` for coordinate `v` on every shard, as full
/// `d`-vectors with a zero at `v`.
pub fn projection_weights<T: Real>(sf: &ShardedFits<T>, v: usize, cfg: &InferenceConfig) -> Result<Vec<Array1<T>>> {
    if v >= sf.d {
        return Err(Error::Index { index: v, len: sf.d });
    }
    let mu = T::of(cfg.dantzig_scale) * sf.rate();
    let others: Vec<usize> = (0..sf.d).filter(|&j| j != v).collect();
    sf.shards
        .iter()
        .zip(&sf.fits)
        .map(|(s, f)| {
            let w = match s.family() {
                Family::GaussianLinear => None,
                Family::Logistic => Some(hessian_weights(s, f.beta.view())?),
            };
            let gram = Gram::lazy(s.x(), w.as_ref().map(|w| w.view()));
            let restrict = |col: ArrayView1<'_, T>| Array1::from_iter(others.iter().map(|&i| col[i]));
            let g = restrict(gram.column(v));
            let sol = dantzig_select_op(|j| restrict(gram.column(others[j])), g.view(), mu)?;
            let mut full = Array1::zeros(sf.d);
            for (&j, &wj) in others.iter().zip(sol.w.iter()) {
                full[j] = wj;
            }
            Ok(full)
        })
        .collect()
}

fn mean_sigma2<T: Real>(fits: &[DebiasedFit<T>]) -> Result<T> {
    let e = aggregate_debiased(fits)?;
    e.sigma_bar2
        .filter(|s| *s > T::zero())
        .ok_or_else(|| Error::DegenerateVariance("residual variance is zero".into()))
}

/// Tests `H₀: β_v = beta_h` with one of the three constructions.
pub fn test_coordinate<T: Real>(
    sf: &ShardedFits<T>,
    v: usize,
    beta_h: T,
    method: TestMethod,
    cfg: &InferenceConfig,
) -> Result<TestResult<T>> {
    if v >= sf.d {
        return Err(Error::Index { index: v, len: sf.d });
    }
    match method {
        TestMethod::WaldLinear => {
            let fits = debias_shards_linear(sf, &[v], cfg)?;
            wald_linear(&fits, v, beta_h)
        }
        TestMethod::WaldGlm => {
            let fits = desparsify_shards(sf, &[v], cfg)?;
            let zeta = T::of(cfg.zeta_scale * rate(sf.n, sf.d, 1));
            let rows: Vec<Array2<T>> = fits
                .iter()
                .map(|f| f.theta_rows.clone().ok_or_else(|| Error::DegenerateVariance("no nodewise rows".into())))
                .collect::<Result<_>>()?;
            let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
            let mut theta_vv = theta_tilde_rows(&views, &[v], zeta)?[0];
            if sf.family == Family::GaussianLinear {
                theta_vv *= mean_sigma2(&fits)?;
            }
            wald_glm(&fits, theta_vv, v, beta_h)
        }
        TestMethod::Score => {
            let w_hats = projection_weights(sf, v, cfg)?;
            let w_views: Vec<_> = w_hats.iter().map(|w| w.view()).collect();
            let w_bar = compensated_mean(&w_views);
            let beta_bar = sf.mean_penalized();
            let (beta_d_v, scale) = match sf.family {
                // The Hessian does not depend on β; only σ̄² is needed.
                Family::GaussianLinear => {
                    let s2: Vec<T> = sf
                        .shards
                        .iter()
                        .zip(&sf.fits)
                        .map(|(s, f)| crate::debias::residual_variance(s, f))
                        .collect::<Result<_>>()?;
                    let s2 = crate::linalg::compensated_sum(s2.iter().copied()) / T::of_usize(s2.len());
                    if !(s2 > T::zero()) {
                        return Err(Error::DegenerateVariance("residual variance is zero".into()));
                    }
                    (beta_bar[v], s2)
                }
                Family::Logistic => {
                    let fits = desparsify_shards(sf, &[v], cfg)?;
                    (aggregate_debiased(&fits)?.beta_bar_d[0], T::one())
                }
            };
            let j_bar = conditional_information(&sf.shards, w_bar.view(), v, beta_d_v, beta_bar.view())? * scale;
            score_statistic(&sf.shards, &sf.fits, &w_hats, v, beta_h, j_bar)
        }
    }
}

/// Debiased estimate of every coordinate, averaged and hard-thresholded.
/// The linear construction is used for Gaussian data and the nodewise one
/// for logistic data.
pub fn estimate<T: Real>(sf: &ShardedFits<T>, cfg: &InferenceConfig, seed: u64) -> Result<DcEstimate<T>> {
    let coords: Vec<usize> = (0..sf.d).collect();
    let fits = match sf.family {
        Family::GaussianLinear => debias_shards_linear(sf, &coords, cfg)?,
        Family::Logistic => desparsify_shards(sf, &coords, cfg)?,
    };
    let mut est = aggregate_debiased(&fits)?;
    if let Some(rows) = fits.iter().map(|f| f.theta_rows.as_ref().map(|r| r.view())).collect::<Option<Vec<_>>>() {
        let zeta = T::of(cfg.zeta_scale * rate(sf.n, sf.d, 1));
        est.theta_tilde_vv = Some(theta_tilde_rows(&rows, &coords, zeta)?);
    }
    let nu = match cfg.threshold {
        ThresholdRule::Fixed { c0 } => T::of(c0 * rate(sf.n, sf.d, 1)),
        ThresholdRule::Bootstrap { alpha, n_draws } => {
            let b_mats: Vec<Array2<T>> = fits
                .iter()
                .zip(&sf.shards)
                .map(|(f, s)| match (&f.b, &f.theta_rows) {
                    (Some(b), _) => b.clone(),
                    (None, Some(theta)) => s.x().dot(&theta.t()),
                    (None, None) => Array2::zeros((s.n(), coords.len())),
                })
                .collect();
            let views: Vec<_> = b_mats.iter().map(|b| b.view()).collect();
            bootstrap_threshold(&sf.shards, &sf.fits, &views, alpha, n_draws, seed)?
        }
    };
    Ok(est.with_threshold(nu))
}
