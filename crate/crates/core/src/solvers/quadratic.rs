//! Coordinate descent for `f(u) + Σ λ_j |u_j|` with a smooth `f` that is
//! either a quadratic or a Huberized quadratic in a linear image of `u`.

use ndarray::{Array1, ArrayView1, ArrayView2, Zip};

use super::SolverSettings;
use crate::error::Result;
use crate::linalg::SymOperator;
use crate::Real;

/// Smooth part of a coordinate-descent problem, seen one coordinate at a time.
pub(crate) trait CdProblem<T> {
    fn dim(&self) -> usize;
    /// Partial derivative of the smooth part at the current point.
    fn grad(&self, j: usize) -> T;
    /// Upper bound on the second partial derivative (exact for quadratics).
    fn curvature(&self, j: usize) -> T;
    /// Moves coordinate `j` by `delta`.
    fn step(&mut self, j: usize, delta: T);
    fn smooth_value(&self, u: ArrayView1<'_, T>) -> T;
    /// Objective value below which the problem is known to be unbounded.
    fn floor(&self) -> Option<T> {
        None
    }
}

#[derive(Clone, Debug)]
pub(crate) struct CdOutcome<T> {
    pub u: Array1<T>,
    pub sweeps: usize,
    pub converged: bool,
    pub kkt: T,
    pub trace: Vec<T>,
}

/// Largest violation of the subgradient optimality conditions.
pub(crate) fn kkt_violation<T: Real, P: CdProblem<T>>(
    p: &P,
    u: ArrayView1<'_, T>,
    lambdas: ArrayView1<'_, T>,
    skip: Option<usize>,
) -> T {
    let mut worst = T::zero();
    for j in 0..p.dim() {
        if Some(j) == skip {
            continue;
        }
        let g = p.grad(j);
        let v = if u[j] == T::zero() {
            (g.abs() - lambdas[j]).max(T::zero())
        } else {
            (g + lambdas[j] * u[j].signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

fn objective<T: Real, P: CdProblem<T>>(p: &P, u: &Array1<T>, lambdas: ArrayView1<'_, T>) -> T {
    p.smooth_value(u.view()) + Zip::from(u).and(&lambdas).fold(T::zero(), |a, &x, &l| a + l * x.abs())
}

/// Cyclic coordinate descent with an active-set inner loop.
///
/// `problem` must be positioned at `u`. Convergence requires both a sweep
/// with sup-norm change at most `tol` and a KKT violation at most `10·tol`.
pub(crate) fn coordinate_descent<T: Real, P: CdProblem<T>>(
    problem: &mut P,
    mut u: Array1<T>,
    lambdas: ArrayView1<'_, T>,
    skip: Option<usize>,
    settings: &SolverSettings,
) -> CdOutcome<T> {
    let d = problem.dim();
    let tol = T::of(settings.tol);
    let kkt_tol = tol * T::of(10.0);
    let blowup = T::of(1e12);
    let mut trace = Vec::new();
    if settings.record_trace {
        trace.push(objective(problem, &u, lambdas));
    }
    let mut sweeps = 0;

    let sweep = |problem: &mut P, u: &mut Array1<T>, coords: &mut dyn Iterator<Item = usize>| -> T {
        let mut change = T::zero();
        for j in coords {
            let l = problem.curvature(j);
            if !(l > T::zero()) {
                continue;
            }
            let old = u[j];
            let new = (old - problem.grad(j) / l).soft_threshold(lambdas[j] / l);
            if new != old {
                problem.step(j, new - old);
                u[j] = new;
                change = change.max((new - old).abs());
            }
        }
        change
    };

    let mut active: Vec<usize> = Vec::with_capacity(d);
    loop {
        if sweeps >= settings.max_iters {
            break;
        }
        let change = sweep(problem, &mut u, &mut (0..d).filter(|&j| Some(j) != skip));
        sweeps += 1;
        if settings.record_trace {
            trace.push(objective(problem, &u, lambdas));
        }
        if u.iter().any(|v| !v.is_finite() || v.abs() > blowup) {
            break;
        }
        if let Some(floor) = problem.floor() {
            if objective(problem, &u, lambdas) < floor {
                break;
            }
        }
        if change <= tol {
            let kkt = kkt_violation(problem, u.view(), lambdas, skip);
            if kkt <= kkt_tol {
                return CdOutcome {
                    u,
                    sweeps,
                    converged: true,
                    kkt,
                    trace,
                };
            }
        }
        if settings.active_set {
            active.clear();
            active.extend((0..d).filter(|&j| u[j] != T::zero() && Some(j) != skip));
            while sweeps < settings.max_iters {
                let change = sweep(problem, &mut u, &mut active.iter().copied());
                sweeps += 1;
                if settings.record_trace {
                    trace.push(objective(problem, &u, lambdas));
                }
                if change <= tol || u.iter().any(|v| !v.is_finite()) {
                    break;
                }
            }
        }
    }
    let kkt = kkt_violation(problem, u.view(), lambdas, skip);
    CdOutcome {
        u,
        sweeps,
        converged: false,
        kkt,
        trace,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Smooth<T> {
    Squared,
    /// `(1/2n) Σ H(ρ_i)` with `H(r) = r²` for `|r| ≤ θ` and `2θ|r| − θ²` beyond.
    Huber(T),
}

fn clip<T: Real>(r: T, t: T) -> T {
    if r > t {
        t
    } else if r < -t {
        -t
    } else {
        r
    }
}

/// `f(u) = (1/2n) Σ w_i φ(x_iᵀu − z_i) − cᵀu`, stored through the
/// running residual `ρ = Xu − z`.
pub(crate) struct DesignQuadratic<'a, T> {
    x: ArrayView2<'a, T>,
    weights: Option<Array1<T>>,
    c: Option<Array1<T>>,
    rho: Array1<T>,
    /// `clip(ρ, ±θ)` for the Huber form, kept in step with `rho`.
    psi: Option<Array1<T>>,
    curv: Array1<T>,
    smooth: Smooth<T>,
    inv_n: T,
    floor: Option<T>,
}

impl<'a, T: Real> DesignQuadratic<'a, T> {
    pub fn new(
        x: ArrayView2<'a, T>,
        weights: Option<Array1<T>>,
        z: Option<ArrayView1<'_, T>>,
        c: Option<Array1<T>>,
        u0: ArrayView1<'_, T>,
        smooth: Smooth<T>,
    ) -> Self {
        let inv_n = T::one() / T::of_usize(x.nrows().max(1));
        let mut rho = x.dot(&u0);
        if let Some(z) = z {
            rho -= &z;
        }
        let curv = Array1::from_iter(x.columns().into_iter().map(|col| {
            let s = match &weights {
                None => col.dot(&col),
                Some(w) => Zip::from(&col).and(w).fold(T::zero(), |a, &xi, &wi| a + wi * xi * xi),
            };
            s * inv_n
        }));
        let psi = match smooth {
            Smooth::Squared => None,
            Smooth::Huber(t) => Some(rho.mapv(|r| clip(r, t))),
        };
        Self {
            x,
            weights,
            c,
            rho,
            psi,
            curv,
            smooth,
            inv_n,
            floor: None,
        }
    }

    pub fn with_floor(mut self, floor: T) -> Self {
        self.floor = Some(floor);
        self
    }

    /// `Xu − z` at the current point.
    pub fn residual(&self) -> ArrayView1<'_, T> {
        self.rho.view()
    }
}

impl<T: Real> CdProblem<T> for DesignQuadratic<'_, T> {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn grad(&self, j: usize) -> T {
        let col = self.x.column(j);
        let s = match (&self.weights, self.smooth) {
            (None, Smooth::Squared) => col.dot(&self.rho),
            (Some(w), Smooth::Squared) => {
                Zip::from(&col).and(w).and(&self.rho).fold(T::zero(), |a, &x, &w, &r| a + x * w * r)
            }
            (None, Smooth::Huber(_)) => col.dot(self.psi.as_ref().expect("huber state")),
            (Some(w), Smooth::Huber(_)) => Zip::from(&col)
                .and(w)
                .and(self.psi.as_ref().expect("huber state"))
                .fold(T::zero(), |a, &x, &w, &p| a + x * w * p),
        };
        let c = self.c.as_ref().map_or(T::zero(), |c| c[j]);
        s * self.inv_n - c
    }

    fn curvature(&self, j: usize) -> T {
        self.curv[j]
    }

    fn step(&mut self, j: usize, delta: T) {
        self.rho.scaled_add(delta, &self.x.column(j));
        if let (Some(psi), Smooth::Huber(t)) = (self.psi.as_mut(), self.smooth) {
            Zip::from(psi).and(&self.rho).for_each(|p, &r| *p = clip(r, t));
        }
    }

    fn smooth_value(&self, u: ArrayView1<'_, T>) -> T {
        let half = T::of(0.5);
        let phi = |r: T| match self.smooth {
            Smooth::Squared => r * r,
            Smooth::Huber(t) => {
                if r.abs() <= t {
                    r * r
                } else {
                    T::of(2.0) * t * r.abs() - t * t
                }
            }
        };
        let q = match &self.weights {
            None => self.rho.iter().map(|&r| phi(r)).sum::<T>(),
            Some(w) => Zip::from(w).and(&self.rho).fold(T::zero(), |a, &w, &r| a + w * phi(r)),
        };
        let lin = self.c.as_ref().map_or(T::zero(), |c| c.dot(&u));
        half * q * self.inv_n - lin
    }

    fn floor(&self) -> Option<T> {
        self.floor
    }
}

/// `½ uᵀQu − cᵀu` with the gradient `Qu − c` kept up to date.
pub(crate) struct OperatorQuadratic<'a, T, Q> {
    q: &'a Q,
    c: ArrayView1<'a, T>,
    g: Array1<T>,
    floor: Option<T>,
}

impl<'a, T: Real, Q: SymOperator<T>> OperatorQuadratic<'a, T, Q> {
    pub fn new(q: &'a Q, c: ArrayView1<'a, T>) -> Self {
        Self {
            q,
            c,
            g: c.mapv(|v| -v),
            floor: None,
        }
    }

    pub fn with_floor(mut self, floor: T) -> Self {
        self.floor = Some(floor);
        self
    }
}

impl<T: Real, Q: SymOperator<T>> CdProblem<T> for OperatorQuadratic<'_, T, Q> {
    fn dim(&self) -> usize {
        self.q.dim()
    }

    fn grad(&self, j: usize) -> T {
        self.g[j]
    }

    fn curvature(&self, j: usize) -> T {
        self.q.diag(j)
    }

    fn step(&mut self, j: usize, delta: T) {
        self.g.scaled_add(delta, &self.q.column(j));
    }

    fn smooth_value(&self, u: ArrayView1<'_, T>) -> T {
        let half = T::of(0.5);
        half * u.dot(&self.g) - half * u.dot(&self.c)
    }

    fn floor(&self) -> Option<T> {
        self.floor
    }
}

#[derive(Clone, Debug)]
pub struct QuadraticFit<T> {
    pub u: Array1<T>,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_violation: T,
    pub objective: T,
}

/// Minimizes `½ uᵀQu − cᵀu + λ‖u‖₁` by coordinate descent. An excluded
/// coordinate is held at zero and left out of the penalty.
pub fn quadratic_lasso<T: Real, Q: SymOperator<T>>(
    q: &Q,
    c: ArrayView1<'_, T>,
    lambda: T,
    exclude: Option<usize>,
    settings: &SolverSettings,
) -> Result<QuadraticFit<T>> {
    settings.validate()?;
    let d = q.dim();
    if c.len() != d {
        return Err(crate::Error::Dimension(format!("linear term has {} entries, operator is {d}x{d}", c.len())));
    }
    if !(lambda >= T::zero()) {
        return Err(crate::Error::InvalidConfig(format!("lambda must be nonnegative, got {lambda}")));
    }
    let mut p = OperatorQuadratic::new(q, c);
    let lambdas = Array1::from_elem(d, lambda);
    let out = coordinate_descent(&mut p, Array1::zeros(d), lambdas.view(), exclude, settings);
    let objective = p.smooth_value(out.u.view()) + lambda * out.u.iter().map(|v| v.abs()).sum::<T>();
    Ok(QuadraticFit {
        u: out.u,
        iterations: out.sweeps,
        converged: out.converged,
        kkt_violation: out.kkt,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cholesky_solve, Gram};
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};

    #[test]
    fn identity_operator_soft_thresholds() {
        let q = Array2::<f64>::eye(3);
        let c = array![2.0, -0.3, -1.5];
        let fit = quadratic_lasso(&q, c.view(), 0.5, None, &SolverSettings::default()).unwrap();
        assert_abs_diff_eq!(fit.u, array![1.5, 0.0, -1.0], epsilon = 1e-14);
        assert!(fit.converged);
    }

    #[test]
    fn zero_penalty_solves_linear_system() {
        let q = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let c = array![1.0, -2.0, 0.5];
        let settings = SolverSettings {
            tol: 1e-12,
            ..Default::default()
        };
        let fit = quadratic_lasso(&q, c.view(), 0.0, None, &settings).unwrap();
        assert_abs_diff_eq!(fit.u, cholesky_solve(q.view(), c.view()).unwrap(), epsilon = 1e-10);
    }

    #[test]
    fn excluded_coordinate_stays_zero() {
        let q = array![[2.0, 0.5], [0.5, 1.0]];
        let c = array![1.0, 1.0];
        let fit = quadratic_lasso(&q, c.view(), 0.0, Some(0), &SolverSettings::default()).unwrap();
        assert_eq!(fit.u[0], 0.0);
        assert_abs_diff_eq!(fit.u[1], 1.0, epsilon = 1e-7);
    }

    #[test]
    fn design_form_matches_operator_form() {
        let x = array![[1.0, 0.2, -0.5], [0.3, -1.0, 0.8], [-0.7, 0.4, 1.1], [1.2, 0.9, 0.0], [0.1, -0.3, -0.9]];
        let z = array![0.5, -1.0, 2.0, 0.3, -0.4];
        let w = array![0.2, 0.25, 0.1, 0.24, 0.15];
        let settings = SolverSettings {
            tol: 1e-12,
            ..Default::default()
        };
        let lambdas = Array1::from_elem(3, 0.01);
        let mut p = DesignQuadratic::new(x.view(), Some(w.clone()), Some(z.view()), None, Array1::zeros(3).view(), Smooth::Squared);
        let a = coordinate_descent(&mut p, Array1::zeros(3), lambdas.view(), None, &settings);

        let gram = Gram::dense(x.view(), Some(w.view())).to_dense();
        let c = x.t().dot(&(&w * &z)) / 5.0;
        let b = quadratic_lasso(&gram, c.view(), 0.01, None, &settings).unwrap();
        assert_abs_diff_eq!(a.u, b.u, epsilon = 1e-10);
    }

    #[test]
    fn trace_is_monotone() {
        let x = Array2::from_shape_fn((12, 6), |(i, j)| ((i * 7 + j * 3) % 11) as f64 - 5.0 + 0.1 * j as f64);
        let z = Array1::from_shape_fn(12, |i| (i as f64).sin());
        let settings = SolverSettings {
            record_trace: true,
            ..Default::default()
        };
        for smooth in [Smooth::Squared, Smooth::Huber(0.3)] {
            let mut p = DesignQuadratic::new(x.view(), None, Some(z.view()), None, Array1::zeros(6).view(), smooth);
            let out = coordinate_descent(&mut p, Array1::zeros(6), Array1::from_elem(6, 0.05).view(), None, &settings);
            assert!(out.trace.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{:?}", out.trace);
        }
    }
}
