//! Per-coordinate debiasing weights `b_v = X m_v`: the minimum-norm `b`
//! with `‖Xᵀb/n − e_v‖_∞ ≤ θ₁` and `‖b‖_∞ ≤ θ₂`.
//!
//! Each column is solved through its dual,
//! `min_u (1/2n) Σ H_θ₂((Xu)_i) − u_v + θ₁‖u‖₁`, whose minimizer gives
//! `b = clip(Xu, ±θ₂)`. The dual KKT residual is exactly the primal
//! constraint violation, so a converged dual certifies a feasible `b`.
//! While the box is inactive the dual is the quadratic `½uᵀΣ̂u − u_v`, solved
//! on the Gram matrix shared by all columns; the Huber form is only needed
//! when the box binds.

use ndarray::{Array1, Array2, ArrayView2, Zip};
use rayon::prelude::*;

use super::quadratic::{coordinate_descent, DesignQuadratic, OperatorQuadratic, Smooth};
use super::SolverSettings;
use crate::error::{Error, Result};
use crate::linalg::{Dataset, Gram, SymOperator};
use crate::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct DebiasWeights<T> {
    pub coords: Vec<usize>,
    /// Column `i` holds `b_v` for `v = coords[i]`.
    pub b: Array2<T>,
    /// `true` where the program failed and the fallback `x_v / Σ̂_vv` was used.
    pub flags: Vec<bool>,
    /// `‖Xᵀb_v/n − e_v‖_∞` for each column.
    pub constraint_sup: Vec<T>,
}

const DUAL_TOL: f64 = 2e-9;
const DUAL_MAX_SWEEPS: usize = 5_000;
const SLACK: f64 = 1e-7;

/// Weights for every coordinate of the shard.
pub fn debias_weights<T: Real>(shard: &Dataset<T>, theta1: T, theta2: T) -> Result<DebiasWeights<T>> {
    let coords: Vec<usize> = (0..shard.d()).collect();
    debias_weights_for(shard.x(), &coords, theta1, theta2)
}

/// Weights for the listed coordinates only; columns are independent.
pub fn debias_weights_for<T: Real>(
    x: ArrayView2<'_, T>,
    coords: &[usize],
    theta1: T,
    theta2: T,
) -> Result<DebiasWeights<T>> {
    if !(theta1 > T::zero()) || !(theta2 > T::zero()) {
        return Err(Error::InvalidConfig(format!(
            "debiasing constraints must be positive, got θ₁ = {theta1}, θ₂ = {theta2}"
        )));
    }
    if let Some(&v) = coords.iter().find(|&&v| v >= x.ncols()) {
        return Err(Error::Index { index: v, len: x.ncols() });
    }
    if x.nrows() == 0 {
        return Err(Error::Data("empty shard".into()));
    }
    let gram = Gram::for_columns(x, None, coords.len());
    let cols: Vec<(Array1<T>, bool, T)> =
        coords.par_iter().map(|&v| solve_column(x, &gram, v, theta1, theta2)).collect();
    let mut b = Array2::zeros((x.nrows(), coords.len()));
    let mut flags = Vec::with_capacity(coords.len());
    let mut constraint_sup = Vec::with_capacity(coords.len());
    for (i, (col, flag, sup)) in cols.into_iter().enumerate() {
        b.column_mut(i).assign(&col);
        flags.push(flag);
        constraint_sup.push(sup);
    }
    Ok(DebiasWeights {
        coords: coords.to_vec(),
        b,
        flags,
        constraint_sup,
    })
}

fn constraint_sup<T: Real>(x: ArrayView2<'_, T>, b: &Array1<T>, v: usize) -> T {
    let n = T::of_usize(x.nrows());
    let r = x.t().dot(b) / n;
    r.iter()
        .enumerate()
        .fold(T::zero(), |m, (j, &rj)| m.max(if j == v { (rj - T::one()).abs() } else { rj.abs() }))
}

/// `Σ̂u` and `Xu` through the nonzero entries of `u`.
fn sparse_products<T: Real>(x: ArrayView2<'_, T>, gram: &Gram<'_, T>, u: &Array1<T>) -> (Array1<T>, Array1<T>) {
    let mut su = Array1::zeros(x.ncols());
    let mut xu = Array1::zeros(x.nrows());
    for (j, &uj) in u.iter().enumerate() {
        if uj != T::zero() {
            su.scaled_add(uj, &gram.column(j));
            xu.scaled_add(uj, &x.column(j));
        }
    }
    (su, xu)
}

fn solve_column<T: Real>(x: ArrayView2<'_, T>, gram: &Gram<'_, T>, v: usize, theta1: T, theta2: T) -> (Array1<T>, bool, T) {
    let d = x.ncols();
    let settings = SolverSettings {
        max_iters: DUAL_MAX_SWEEPS,
        tol: DUAL_TOL,
        active_set: true,
        record_trace: false,
    };
    let lambdas = Array1::from_elem(d, theta1);
    let mut c = Array1::zeros(d);
    c[v] = T::one();
    // Any primal-feasible b has ‖b‖²/2n ≤ θ₂²/2, so a dual value below the
    // negative of that proves infeasibility (or an active box).
    let floor = -(theta2 * theta2 * T::of(0.5)) * (T::one() + T::of(1e-9)) - T::of(1e-12);

    let mut p = OperatorQuadratic::new(gram, c.view()).with_floor(floor);
    let out = coordinate_descent(&mut p, Array1::zeros(d), lambdas.view(), None, &settings);
    let slack = theta1 + T::of(SLACK);
    if out.converged {
        let (su, b) = sparse_products(x, gram, &out.u);
        if b.iter().all(|bi| bi.abs() <= theta2) {
            let sup = su
                .iter()
                .enumerate()
                .fold(T::zero(), |m, (j, &s)| m.max(if j == v { (s - T::one()).abs() } else { s.abs() }));
            if sup <= slack {
                return (b, false, sup);
            }
        }
    }

    let u0 = if out.u.iter().all(|u| u.is_finite()) { out.u } else { Array1::zeros(d) };
    let mut p = DesignQuadratic::new(x, None, None, Some(c), u0.view(), Smooth::Huber(theta2)).with_floor(floor);
    let out = coordinate_descent(&mut p, u0, lambdas.view(), None, &settings);
    let b = p.residual().mapv(|r| r.max(-theta2).min(theta2));
    if out.u.iter().all(|u| u.is_finite()) {
        let sup = constraint_sup(x, &b, v);
        if sup <= slack {
            return (b, false, sup);
        }
    }
    fallback(x, v)
}

fn fallback<T: Real>(x: ArrayView2<'_, T>, v: usize) -> (Array1<T>, bool, T) {
    let xv = x.column(v);
    let n = T::of_usize(x.nrows());
    let svv = xv.dot(&xv) / n;
    let b = if svv > T::zero() { xv.mapv(|a| a / svv) } else { Array1::zeros(x.nrows()) };
    let sup = constraint_sup(x, &b, v);
    (b, true, sup)
}

impl<T: Real> DebiasWeights<T> {
    /// `Q̂_v = ‖b_v‖₂ / √n`.
    pub fn q(&self) -> Array1<T> {
        let n = T::of_usize(self.b.nrows().max(1));
        Array1::from_iter(self.b.columns().into_iter().map(|c| (c.dot(&c) / n).sqrt()))
    }

    /// `‖b_v‖²/n`, the primal objective for each column.
    pub fn objective(&self) -> Array1<T> {
        let n = T::of_usize(self.b.nrows().max(1));
        Array1::from_iter(self.b.columns().into_iter().map(|c| Zip::from(&c).fold(T::zero(), |a, &x| a + x * x) / n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Family;
    use approx::assert_abs_diff_eq;
    use ndarray::s;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| StandardNormal.sample(&mut rng))
    }

    /// Projected gradient ascent on the Lagrangian dual of
    /// `min ½‖b‖²  s.t.  A b ≤ h`, with `A` stacking `±Xᵀ/n` and `±I`.
    fn projected_gradient_oracle(x: &Array2<f64>, v: usize, t1: f64, t2: f64) -> Array1<f64> {
        let (n, d) = x.dim();
        let mut a = Array2::zeros((2 * d + 2 * n, n));
        let mut h = Array1::zeros(2 * d + 2 * n);
        let xt = x.t().to_owned() / n as f64;
        a.slice_mut(s![0..d, ..]).assign(&xt);
        a.slice_mut(s![d..2 * d, ..]).assign(&(-&xt));
        for i in 0..n {
            a[[2 * d + i, i]] = 1.0;
            a[[2 * d + n + i, i]] = -1.0;
        }
        for j in 0..d {
            let e = if j == v { 1.0 } else { 0.0 };
            h[j] = t1 + e;
            h[d + j] = t1 - e;
        }
        h.slice_mut(s![2 * d..]).fill(t2);
        let aat = a.dot(&a.t());
        let lip = aat.iter().map(|v| v.abs()).sum::<f64>();
        let mut lam = Array1::<f64>::zeros(h.len());
        for _ in 0..400_000 {
            // dual objective −½‖Aᵀλ‖² − hᵀλ, gradient −AAᵀλ − h
            let g = -aat.dot(&lam) - &h;
            lam = (&lam + &(g / lip)).mapv(|l| l.max(0.0));
        }
        -a.t().dot(&lam)
    }

    #[test]
    fn matches_projected_gradient_oracle() {
        for seed in 0..5 {
            let x = gaussian(6, 3, seed);
            for (t1, t2) in [(0.2, 5.0), (0.3, 0.9), (0.05, 10.0)] {
                for v in 0..3 {
                    let w = debias_weights_for(x.view(), &[v], t1, t2).unwrap();
                    let oracle = projected_gradient_oracle(&x, v, t1, t2);
                    let ob = oracle.dot(&oracle) / 6.0;
                    if w.flags[0] {
                        continue;
                    }
                    let got = w.objective()[0];
                    assert!((got - ob).abs() <= 1e-4 * ob, "seed {seed} v {v} θ=({t1},{t2}): {got} vs {ob}");
                }
            }
        }
    }

    #[test]
    fn orthogonal_design_gives_scaled_columns() {
        let n = 4;
        let x = Array2::eye(n) * (n as f64).sqrt();
        let ds = Dataset::new(x.clone(), Array1::zeros(n), Family::GaussianLinear).unwrap();
        let w = debias_weights(&ds, 0.1, 100.0).unwrap();
        for v in 0..n {
            assert!(!w.flags[v]);
            let expected = x.column(v).mapv(|a| a * 0.9);
            assert_abs_diff_eq!(w.b.column(v), expected, epsilon = 1e-8);
        }
        let ds = Dataset::new(x, Array1::zeros(n), Family::GaussianLinear).unwrap();
        let w = debias_weights(&ds, 1e-3, 100.0).unwrap();
        for q in w.q() {
            assert!((q - 1.0).abs() < 2e-3);
        }
    }

    #[test]
    fn feasible_or_flagged() {
        for seed in 0..10 {
            let n = 30;
            let d = 12 + seed as usize;
            let x = gaussian(n, d, 100 + seed);
            let ds = Dataset::new(x, Array1::zeros(n), Family::GaussianLinear).unwrap();
            let t1 = ((d as f64).ln() / n as f64).sqrt();
            let t2 = (n as f64).sqrt() / (n as f64).ln();
            let w = debias_weights(&ds, t1, t2).unwrap();
            for (i, (&flag, &sup)) in w.flags.iter().zip(&w.constraint_sup).enumerate() {
                if !flag {
                    assert!(sup <= t1 + 1e-7, "column {i}: {sup}");
                    assert!(w.b.column(i).iter().all(|b| b.abs() <= t2 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn infeasible_column_falls_back() {
        // Two identical columns: the constraint rows for v and its twin cannot
        // differ by more than 2θ₁, so θ₁ < 1/2 is infeasible.
        let mut x = gaussian(10, 3, 9);
        let c0 = x.column(0).to_owned();
        x.column_mut(1).assign(&c0);
        let w = debias_weights_for(x.view(), &[0], 0.1, 100.0).unwrap();
        assert!(w.flags[0]);
        let svv = c0.dot(&c0) / 10.0;
        assert_abs_diff_eq!(w.b.column(0), c0.mapv(|a| a / svv), epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        let x = gaussian(5, 2, 0);
        assert!(debias_weights_for(x.view(), &[0], 0.0, 1.0).is_err());
        assert!(debias_weights_for(x.view(), &[0], 0.1, -1.0).is_err());
        assert!(matches!(debias_weights_for(x.view(), &[2], 0.1, 1.0), Err(Error::Index { .. })));
    }
}
