use ndarray::{Array1, Array2, Zip};
use rayon::prelude::*;

use super::DebiasedFit;
use crate::error::{Error, Result};
use crate::linalg::{Dataset, Family};
use crate::solvers::{gradient, hessian_weights, ShardFit, SolverSettings};
use crate::Real;

/// Nodewise LASSO rows of the inverse-Hessian surrogate `Θ̂ = Ξ̂⁻² Ĉ`.
///
/// Row `i` of every matrix corresponds to coordinate `rows[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NodewiseResult<T> {
    pub rows: Vec<usize>,
    /// `κ̂_v` embedded in a `d`-vector with a zero at position `v`.
    pub kappa: Array2<T>,
    pub tau2: Array1<T>,
    pub theta: Array2<T>,
    pub converged: Vec<bool>,
    pub kkt_violation: Vec<T>,
}

impl<T: Real> NodewiseResult<T> {
    /// Rows of `Ĉ`: one on the diagonal, `−κ̂_v` elsewhere.
    pub fn c_hat(&self) -> Array2<T> {
        let mut c = self.kappa.mapv(|k| -k);
        for (i, &v) in self.rows.iter().enumerate() {
            c[[i, v]] = T::one();
        }
        c
    }

    pub fn position(&self, v: usize) -> Result<usize> {
        self.rows.iter().position(|&r| r == v).ok_or(Error::Index {
            index: v,
            len: self.kappa.ncols(),
        })
    }
}

const TAU2_FLOOR: f64 = 1e-10;

pub fn nodewise_lasso<T: Real>(shard: &Dataset<T>, fit: &ShardFit<T>, lambda_v: T) -> Result<NodewiseResult<T>> {
    let rows: Vec<usize> = (0..shard.d()).collect();
    nodewise_lasso_for(shard, fit, &rows, lambda_v, &SolverSettings::default())
}

/// Solves, for each listed `v`,
/// `min_κ ½ κᵀĴ_{−v,−v}κ − Ĵ_{v,−v}κ + λ_v‖κ‖₁` with `Ĵ = XᵀDX/n_k` the
/// Hessian at the shard estimate, then `τ̂_v² = Ĵ_vv − Ĵ_{v,−v}κ̂_v`.
pub fn nodewise_lasso_for<T: Real>(
    shard: &Dataset<T>,
    fit: &ShardFit<T>,
    rows: &[usize],
    lambda_v: T,
    settings: &SolverSettings,
) -> Result<NodewiseResult<T>> {
    settings.validate()?;
    if !(lambda_v >= T::zero()) {
        return Err(Error::InvalidConfig(format!("nodewise lambda must be nonnegative, got {lambda_v}")));
    }
    let d = shard.d();
    if let Some(&v) = rows.iter().find(|&&v| v >= d) {
        return Err(Error::Index { index: v, len: d });
    }
    let weights = match shard.family() {
        Family::GaussianLinear => None,
        Family::Logistic => Some(hessian_weights(shard, fit.beta.view())?),
    };
    let solved: Vec<Result<RowSolution<T>>> = rows
        .par_iter()
        .map(|&v| solve_row(shard, weights.as_ref(), v, lambda_v, settings))
        .collect();

    let m = rows.len();
    let mut kappa = Array2::zeros((m, d));
    let mut theta = Array2::zeros((m, d));
    let mut tau2 = Array1::zeros(m);
    let mut converged = Vec::with_capacity(m);
    let mut kkt_violation = Vec::with_capacity(m);
    for (i, (res, &v)) in solved.into_iter().zip(rows).enumerate() {
        let (k, t2, conv, kkt) = res?;
        theta.row_mut(i).assign(&k.mapv(|x| -x / t2));
        theta[[i, v]] = T::one() / t2;
        kappa.row_mut(i).assign(&k);
        tau2[i] = t2;
        converged.push(conv);
        kkt_violation.push(kkt);
    }
    Ok(NodewiseResult {
        rows: rows.to_vec(),
        kappa,
        tau2,
        theta,
        converged,
        kkt_violation,
    })
}

/// `(κ̂_v, τ̂_v², converged, KKT violation)`.
type RowSolution<T> = (Array1<T>, T, bool, T);

fn solve_row<T: Real>(
    shard: &Dataset<T>,
    weights: Option<&Array1<T>>,
    v: usize,
    lambda_v: T,
    settings: &SolverSettings,
) -> Result<RowSolution<T>> {
    use crate::solvers::quadratic_internal::{coordinate_descent, DesignQuadratic, Smooth};
    let x = shard.x();
    let d = shard.d();
    let xv = x.column(v);
    let u0 = Array1::zeros(d);
    let mut p = DesignQuadratic::new(x, weights.cloned(), Some(xv), None, u0.view(), Smooth::Squared);
    let lambdas = Array1::from_elem(d, lambda_v);
    let out = coordinate_descent(&mut p, u0, lambdas.view(), Some(v), settings);
    // τ² = (1/n) x_vᵀ D (x_v − X_{−v}κ) and the residual is X_{−v}κ − x_v
    let n = T::of_usize(shard.n().max(1));
    let rho = p.residual();
    let t2 = match weights {
        None => -xv.dot(&rho) / n,
        Some(w) => -Zip::from(&xv).and(w).and(&rho).fold(T::zero(), |a, &x, &w, &r| a + x * w * r) / n,
    };
    if !(t2 > T::of(TAU2_FLOOR)) {
        return Err(Error::DegenerateResidual {
            coordinate: v,
            tau2: t2.as_f64(),
        });
    }
    Ok((out.u, t2, out.converged, out.kkt))
}

/// `β̂ᵈ = β̂ − Θ̂ ∇ℓ(β̂)` for the coordinates held in `nw`.
pub fn desparsify_glm<T: Real>(shard: &Dataset<T>, fit: &ShardFit<T>, nw: &NodewiseResult<T>) -> Result<DebiasedFit<T>> {
    if nw.theta.ncols() != shard.d() || fit.beta.len() != shard.d() {
        return Err(Error::Dimension(format!(
            "nodewise rows have {} columns, fit has {}, shard has {}",
            nw.theta.ncols(),
            fit.beta.len(),
            shard.d()
        )));
    }
    let grad = gradient(shard, fit.beta.view())?;
    let correction = nw.theta.dot(&grad);
    let beta_d = Array1::from_iter(nw.rows.iter().zip(correction.iter()).map(|(&v, &c)| fit.beta[v] - c));
    let sigma2_hat = match shard.family() {
        Family::GaussianLinear => {
            let r = &shard.y() - &shard.x().dot(&fit.beta);
            Some(r.dot(&r) / T::of_usize(shard.n().max(1)))
        }
        Family::Logistic => None,
    };
    Ok(DebiasedFit {
        coords: nw.rows.clone(),
        dim: shard.d(),
        n_obs: shard.n(),
        beta_lambda: fit.beta.clone(),
        beta_d,
        q: None,
        theta_rows: Some(nw.theta.clone()),
        sigma2_hat,
        flags: vec![false; nw.rows.len()],
        b: None,
    })
}
