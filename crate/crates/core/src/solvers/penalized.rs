use ndarray::{Array1, ArrayView1, Zip};

use super::loss::{check_dim, gradient_from_eta, mean_response, nll_from_eta, weights_from_eta};
use super::quadratic::{coordinate_descent, DesignQuadratic, Smooth};
use super::{Penalty, PenaltyKind, SolverSettings};
use crate::error::{Error, Result};
use crate::linalg::{Dataset, Family};
use crate::Real;

/// Penalized M-estimate on one shard plus solver diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct ShardFit<T> {
    pub beta: Array1<T>,
    pub lambda: T,
    pub penalty: PenaltyKind,
    pub loss_value: T,
    /// Loss plus penalty at `beta`.
    pub objective: T,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_violation: T,
    /// Penalized objective after each sweep (linear) or accepted outer step
    /// (logistic, concave penalties); empty unless requested.
    pub objective_trace: Vec<T>,
}

const MAX_OUTER: usize = 50;
const MAX_LLA: usize = 20;
const MIN_WEIGHT: f64 = 1e-6;

pub fn fit_penalized<T: Real>(ds: &Dataset<T>, penalty: &Penalty<T>, settings: &SolverSettings) -> Result<ShardFit<T>> {
    fit_penalized_from(ds, penalty, settings, None)
}

/// As [`fit_penalized`], warm-started at `init` (zero when `None`).
pub fn fit_penalized_from<T: Real>(
    ds: &Dataset<T>,
    penalty: &Penalty<T>,
    settings: &SolverSettings,
    init: Option<ArrayView1<'_, T>>,
) -> Result<ShardFit<T>> {
    penalty.validate()?;
    settings.validate()?;
    if ds.n() == 0 {
        return Err(Error::Data("cannot fit an empty dataset".into()));
    }
    let beta0 = match init {
        Some(b) => {
            check_dim(ds, b)?;
            b.to_owned()
        }
        None => Array1::zeros(ds.d()),
    };
    let lambdas = Array1::from_elem(ds.d(), penalty.lambda);
    let mut fit = weighted_l1(ds, lambdas.view(), beta0, settings);
    if penalty.kind != PenaltyKind::L1 {
        fit = local_linear_approximation(ds, penalty, settings, fit);
    }
    finish(ds, penalty, settings, fit)
}

struct RawFit<T> {
    beta: Array1<T>,
    iterations: usize,
    converged: bool,
    trace: Vec<T>,
}

fn finish<T: Real>(ds: &Dataset<T>, penalty: &Penalty<T>, settings: &SolverSettings, raw: RawFit<T>) -> Result<ShardFit<T>> {
    if raw.beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonConvergence("penalized fit (non-finite coefficients)".into()));
    }
    let eta = ds.x().dot(&raw.beta);
    let loss_value = nll_from_eta(ds.family(), ds.y(), eta.view());
    let kkt = stationarity_violation(ds, penalty, raw.beta.view(), eta.view());
    Ok(ShardFit {
        objective: loss_value + penalty.total(raw.beta.view()),
        lambda: penalty.lambda,
        penalty: penalty.kind,
        loss_value,
        iterations: raw.iterations,
        converged: raw.converged && kkt <= T::of(10.0 * settings.tol),
        kkt_violation: kkt,
        objective_trace: raw.trace,
        beta: raw.beta,
    })
}

/// Violation of `∇ℓ(β) + p'(|β_v|) sign(β_v) = 0` on the support and
/// `|∇_v ℓ(β)| ≤ λ` off it.
fn stationarity_violation<T: Real>(ds: &Dataset<T>, penalty: &Penalty<T>, beta: ArrayView1<'_, T>, eta: ArrayView1<'_, T>) -> T {
    let g = gradient_from_eta(ds, eta);
    Zip::from(&g).and(&beta).fold(T::zero(), |worst, &gj, &bj| {
        let v = if bj == T::zero() {
            (gj.abs() - penalty.lambda).max(T::zero())
        } else {
            (gj + penalty.derivative(bj) * bj.signum()).abs()
        };
        worst.max(v)
    })
}

fn weighted_objective<T: Real>(ds: &Dataset<T>, lambdas: ArrayView1<'_, T>, beta: ArrayView1<'_, T>) -> T {
    let eta = ds.x().dot(&beta);
    nll_from_eta(ds.family(), ds.y(), eta.view()) + Zip::from(&lambdas).and(&beta).fold(T::zero(), |a, &l, &b| a + l * b.abs())
}

/// Minimizes `ℓ(β) + Σ λ_v |β_v|`.
fn weighted_l1<T: Real>(ds: &Dataset<T>, lambdas: ArrayView1<'_, T>, beta0: Array1<T>, settings: &SolverSettings) -> RawFit<T> {
    match ds.family() {
        Family::GaussianLinear => {
            let mut p = DesignQuadratic::new(ds.x(), None, Some(ds.y()), None, beta0.view(), Smooth::Squared);
            let out = coordinate_descent(&mut p, beta0, lambdas, None, settings);
            RawFit {
                beta: out.u,
                iterations: out.sweeps,
                converged: out.converged,
                trace: out.trace,
            }
        }
        Family::Logistic => irls(ds, lambdas, beta0, settings),
    }
}

/// Proximal Newton: each outer step solves the weighted least-squares
/// lasso around the current point, then backtracks on the true objective.
fn irls<T: Real>(ds: &Dataset<T>, lambdas: ArrayView1<'_, T>, mut beta: Array1<T>, settings: &SolverSettings) -> RawFit<T> {
    let tol = T::of(settings.tol);
    let x = ds.x();
    let y = ds.y();
    let mut f = weighted_objective(ds, lambdas, beta.view());
    let mut trace = Vec::new();
    if settings.record_trace {
        trace.push(f);
    }
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..MAX_OUTER {
        let eta = x.dot(&beta);
        let mu = mean_response(Family::Logistic, eta.view());
        let w = weights_from_eta(Family::Logistic, eta.view())
            .expect("logistic weights")
            .mapv(|v| v.max(T::of(MIN_WEIGHT)));
        // working response z = η + (y − μ)/w
        let z = Zip::from(&eta).and(&y).and(&mu).and(&w).map_collect(|&e, &yi, &m, &wi| e + (yi - m) / wi);
        let inner_settings = SolverSettings {
            record_trace: false,
            max_iters: settings.max_iters.saturating_sub(iterations).max(1),
            ..*settings
        };
        let mut p = DesignQuadratic::new(x, Some(w), Some(z.view()), None, beta.view(), Smooth::Squared);
        let out = coordinate_descent(&mut p, beta.clone(), lambdas, None, &inner_settings);
        iterations += out.sweeps;
        let direction = &out.u - &beta;

        let mut t = T::one();
        let mut accepted = None;
        for _ in 0..30 {
            let cand = &beta + &(&direction * t);
            let fc = weighted_objective(ds, lambdas, cand.view());
            if fc <= f + T::epsilon() * f.abs().max(T::one()) * T::of(16.0) {
                accepted = Some((cand, fc));
                break;
            }
            t *= T::of(0.5);
        }
        let Some((cand, fc)) = accepted else {
            break;
        };
        let change = Zip::from(&cand).and(&beta).fold(T::zero(), |m, &a, &b| m.max((a - b).abs()));
        beta = cand;
        f = fc;
        if settings.record_trace {
            trace.push(f);
        }
        if change <= tol {
            let eta = x.dot(&beta);
            let g = gradient_from_eta(ds, eta.view());
            let kkt = Zip::from(&g).and(&beta).and(&lambdas).fold(T::zero(), |m, &gj, &bj, &l| {
                m.max(if bj == T::zero() {
                    (gj.abs() - l).max(T::zero())
                } else {
                    (gj + l * bj.signum()).abs()
                })
            });
            if kkt <= tol * T::of(10.0) {
                converged = true;
                break;
            }
        }
        if iterations >= settings.max_iters {
            break;
        }
    }
    RawFit {
        beta,
        iterations,
        converged,
        trace,
    }
}

/// Concave penalties by iterated weighted L1 fits with weights `p'(|β_v|)`,
/// keeping a step only if it lowers the concave objective.
fn local_linear_approximation<T: Real>(ds: &Dataset<T>, penalty: &Penalty<T>, settings: &SolverSettings, start: RawFit<T>) -> RawFit<T> {
    let tol = T::of(settings.tol);
    let objective = |b: ArrayView1<'_, T>| {
        let eta = ds.x().dot(&b);
        nll_from_eta(ds.family(), ds.y(), eta.view()) + penalty.total(b)
    };
    let mut beta = start.beta;
    let mut f = objective(beta.view());
    let mut iterations = start.iterations;
    let mut converged = start.converged;
    let mut trace = Vec::new();
    if settings.record_trace {
        trace.push(f);
    }
    for _ in 0..MAX_LLA {
        let lambdas = beta.mapv(|b| penalty.derivative(b));
        let inner_settings = SolverSettings {
            record_trace: false,
            ..*settings
        };
        let next = weighted_l1(ds, lambdas.view(), beta.clone(), &inner_settings);
        iterations += next.iterations;
        let fn_ = objective(next.beta.view());
        if !(fn_ <= f) {
            break;
        }
        let change = Zip::from(&next.beta).and(&beta).fold(T::zero(), |m, &a, &b| m.max((a - b).abs()));
        beta = next.beta;
        f = fn_;
        converged = next.converged;
        if settings.record_trace {
            trace.push(f);
        }
        if change <= tol {
            break;
        }
    }
    RawFit {
        beta,
        iterations,
        converged,
        trace,
    }
}

impl<T: Real> ShardFit<T> {
    pub fn support(&self) -> Vec<usize> {
        self.beta
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != T::zero())
            .map(|(j, _)| j)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cholesky_solve;
    use approx::assert_abs_diff_eq;
    use ndarray::{s, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn linear_instance(n: usize, d: usize, seed: u64) -> Dataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, d), |_| StandardNormal.sample(&mut rng));
        let mut beta = Array1::zeros(d);
        for j in 0..d.min(3) {
            beta[j] = rng.random_range(0.5..2.0);
        }
        let noise: Array1<f64> = Array1::from_shape_fn(n, |_| StandardNormal.sample(&mut rng));
        Dataset::new(x.clone(), x.dot(&beta) + noise, Family::GaussianLinear).unwrap()
    }

    fn logistic_instance(n: usize, d: usize, seed: u64) -> Dataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, d), |_| StandardNormal.sample(&mut rng));
        let mut beta = Array1::zeros(d);
        beta[0] = 1.5;
        beta[1] = -1.0;
        let y = x.dot(&beta).mapv(|e: f64| f64::from(u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-e).exp()))));
        Dataset::new(x, y, Family::Logistic).unwrap()
    }

    /// Orthonormal columns scaled so that `XᵀX/n = I`, built by Gram-Schmidt.
    fn orthonormal_design(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut q = Array2::<f64>::from_shape_fn((n, d), |_| StandardNormal.sample(&mut rng));
        for j in 0..d {
            for k in 0..j {
                let proj = q.column(j).dot(&q.column(k));
                let qk = q.column(k).to_owned();
                q.column_mut(j).scaled_add(-proj, &qk);
            }
            let norm = q.column(j).dot(&q.column(j)).sqrt();
            q.column_mut(j).mapv_inplace(|v| v / norm);
        }
        q * (n as f64).sqrt()
    }

    #[test]
    fn orthonormal_design_soft_thresholds() {
        let n = 40;
        let x = orthonormal_design(n, 6, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = Array1::from_shape_fn(n, |_| rng.random_range(-2.0..2.0));
        let ds = Dataset::new(x.clone(), y.clone(), Family::GaussianLinear).unwrap();
        let lambda = 0.2;
        let fit = fit_penalized(&ds, &Penalty::l1(lambda), &SolverSettings::default()).unwrap();
        let xty = x.t().dot(&y) / n as f64;
        for v in 0..6 {
            assert!((fit.beta[v] - xty[v].soft_threshold(lambda)).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_penalty_is_ols() {
        let ds = linear_instance(60, 8, 3);
        let settings = SolverSettings {
            tol: 1e-11,
            ..Default::default()
        };
        let fit = fit_penalized(&ds, &Penalty::l1(0.0), &settings).unwrap();
        let x = ds.x();
        let ols = cholesky_solve(x.t().dot(&x).view(), x.t().dot(&ds.y()).view()).unwrap();
        assert_abs_diff_eq!(fit.beta, ols, epsilon = 1e-8);
    }

    #[test]
    fn large_penalty_gives_null_model() {
        let ds = linear_instance(50, 10, 4);
        let lmax = (ds.x().t().dot(&ds.y()) / 50.0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let fit = fit_penalized(&ds, &Penalty::l1(lmax), &SolverSettings::default()).unwrap();
        assert!(fit.beta.iter().all(|&b| b == 0.0));
        assert!(fit.converged);
    }

    #[test]
    fn lambda_must_be_nonnegative() {
        let ds = linear_instance(10, 2, 5);
        assert!(matches!(
            fit_penalized(&ds, &Penalty::l1(-0.1), &SolverSettings::default()),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let ds = linear_instance(50, 20, 6);
        let settings = SolverSettings {
            max_iters: 1,
            tol: 1e-12,
            ..Default::default()
        };
        let fit = fit_penalized(&ds, &Penalty::l1(0.01), &settings).unwrap();
        assert!(!fit.converged);
    }

    #[test]
    fn logistic_fit_satisfies_kkt() {
        let ds = logistic_instance(200, 10, 7);
        let settings = SolverSettings::default();
        let fit = fit_penalized(&ds, &Penalty::l1(0.05), &settings).unwrap();
        assert!(fit.converged);
        assert!(fit.kkt_violation <= 10.0 * settings.tol);
        let g = crate::solvers::gradient(&ds, fit.beta.view()).unwrap();
        for v in 0..10 {
            if fit.beta[v] == 0.0 {
                assert!(g[v].abs() <= 0.05 + 1e-6);
            } else {
                assert!((g[v] + 0.05 * fit.beta[v].signum()).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn objective_trace_never_increases() {
        let settings = SolverSettings {
            record_trace: true,
            ..Default::default()
        };
        for (ds, lambda) in [(linear_instance(80, 30, 8), 0.1), (logistic_instance(150, 12, 9), 0.03)] {
            for penalty in [Penalty::l1(lambda), Penalty::scad(lambda, 3.7), Penalty::mcp(lambda, 3.0)] {
                let fit = fit_penalized(&ds, &penalty, &settings).unwrap();
                assert!(fit.objective_trace.len() > 1);
                assert!(
                    fit.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12),
                    "{penalty:?} {:?}",
                    fit.objective_trace
                );
            }
        }
    }

    #[test]
    fn concave_penalties_do_not_ascend_from_lasso() {
        for seed in 0..5 {
            let ds = linear_instance(60, 20, 20 + seed);
            let lambda = 0.3;
            let l1 = fit_penalized(&ds, &Penalty::l1(lambda), &SolverSettings::default()).unwrap();
            for penalty in [Penalty::scad(lambda, 3.7), Penalty::mcp(lambda, 3.0)] {
                let fit = fit_penalized(&ds, &penalty, &SolverSettings::default()).unwrap();
                let at_l1 = l1.loss_value + penalty.total(l1.beta.view());
                assert!(fit.objective <= at_l1 + 1e-12);
                assert!(fit.objective <= l1.objective + 1e-12);
            }
        }
    }

    #[test]
    fn scad_removes_bias_on_strong_signals() {
        let ds = linear_instance(400, 10, 30);
        let lambda = 0.2;
        let l1 = fit_penalized(&ds, &Penalty::l1(lambda), &SolverSettings::default()).unwrap();
        let scad = fit_penalized(&ds, &Penalty::scad(lambda, 3.7), &SolverSettings::default()).unwrap();
        let x = ds.x().slice(s![.., 0..3]).to_owned();
        let oracle = cholesky_solve(x.t().dot(&x).view(), x.t().dot(&ds.y()).view()).unwrap();
        let err = |b: &Array1<f64>| (0..3).map(|j| (b[j] - oracle[j]).abs()).fold(0.0, f64::max);
        assert!(err(&scad.beta) < err(&l1.beta));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn lasso_kkt_holds(seed in any::<u64>(), n in 10usize..120, d in 2usize..40, scale in 0.02f64..1.0) {
            let ds = linear_instance(n, d, seed);
            let lmax = (ds.x().t().dot(&ds.y()) / n as f64).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let lambda = scale * lmax;
            let settings = SolverSettings::default();
            let fit = fit_penalized(&ds, &Penalty::l1(lambda), &settings).unwrap();
            prop_assert!(fit.converged);
            let r = &ds.y() - &ds.x().dot(&fit.beta);
            let c = ds.x().t().dot(&r) / n as f64;
            for v in 0..d {
                if fit.beta[v] == 0.0 {
                    prop_assert!(c[v].abs() <= lambda + 10.0 * settings.tol);
                } else {
                    prop_assert!((c[v] - lambda * fit.beta[v].signum()).abs() <= 10.0 * settings.tol);
                }
            }
        }
    }
}
