//! Dantzig selector `min ‖w‖₁ s.t. ‖g − Hw‖_∞ ≤ μ` for symmetric `H`.
//!
//! Solved exactly as the linear program
//! `min 1ᵀ(p + q)  s.t.  H(p − q) − z = g,  p, q ≥ 0,  −μ ≤ z ≤ μ`
//! by a bounded-variable dual simplex. Starting from the all-slack basis
//! (`y = 0`, which is dual feasible), only `s = |supp w|` structural columns
//! are ever basic, so each iteration factors an `s × s` matrix and touches
//! `O(s)` columns of `H`, fetched on demand.

use std::collections::HashMap;
use std::sync::Mutex;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::Lu;
use crate::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct DantzigSolution<T> {
    pub w: Array1<T>,
    pub l1_norm: T,
    /// Weak-duality lower bound on the optimal ℓ1 norm.
    pub lower_bound: T,
    /// `‖g − Hw‖_∞`.
    pub max_residual: T,
    pub iterations: usize,
}

pub fn dantzig_select<T: Real>(h: ArrayView2<'_, T>, g: ArrayView1<'_, T>, mu: T) -> Result<DantzigSolution<T>> {
    let m = g.len();
    if h.nrows() != m || h.ncols() != m {
        return Err(Error::Dimension(format!("H is {}x{}, g has {m} entries", h.nrows(), h.ncols())));
    }
    dantzig_select_op(|j| h.column(j).to_owned(), g, mu)
}

/// As [`dantzig_select`], with `H` supplied column by column.
pub fn dantzig_select_op<T: Real, F: Fn(usize) -> Array1<T>>(column: F, g: ArrayView1<'_, T>, mu: T) -> Result<DantzigSolution<T>> {
    if !(mu > T::zero()) {
        return Err(Error::InvalidConfig(format!("Dantzig constraint level must be positive, got {mu}")));
    }
    let cols = Columns::new(column, g.len());
    match DualSimplex::new(&cols, g, mu).run() {
        Ok(sol) => Ok(sol),
        Err(Outcome::Infeasible) => Err(Error::DantzigInfeasible {
            min_residual: minimal_residual(&cols, g, mu).as_f64(),
        }),
        Err(Outcome::Stalled) => Err(Error::NonConvergence("Dantzig selector".into())),
    }
}

/// Smallest `μ` for which the program is feasible, by bisection.
fn minimal_residual<T: Real, F: Fn(usize) -> Array1<T>>(cols: &Columns<T, F>, g: ArrayView1<'_, T>, mu: T) -> T {
    let mut lo = mu;
    let mut hi = g.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    for _ in 0..60 {
        if hi - lo <= T::of(1e-10) * hi.max(T::one()) {
            break;
        }
        let mid = (lo + hi) * T::of(0.5);
        match DualSimplex::new(cols, g, mid).run() {
            Ok(_) => hi = mid,
            Err(_) => lo = mid,
        }
    }
    hi
}

struct Columns<T, F> {
    fetch: F,
    m: usize,
    cache: Mutex<HashMap<usize, std::sync::Arc<Array1<T>>>>,
}

impl<T: Real, F: Fn(usize) -> Array1<T>> Columns<T, F> {
    fn new(fetch: F, m: usize) -> Self {
        Self {
            fetch,
            m,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn get(&self, j: usize) -> std::sync::Arc<Array1<T>> {
        if let Some(c) = self.cache.lock().expect("column cache").get(&j) {
            return c.clone();
        }
        let c = std::sync::Arc::new((self.fetch)(j));
        assert_eq!(c.len(), self.m, "column {j} has the wrong length");
        self.cache.lock().expect("column cache").insert(j, c.clone());
        c
    }
}

enum Outcome {
    Infeasible,
    Stalled,
}

#[derive(Clone, Copy, PartialEq)]
enum Var {
    /// `p_j` (`sign = 1`) or `q_j` (`sign = −1`).
    Structural { j: usize, sign: i8 },
    Slack { i: usize },
}

struct DualSimplex<'a, T, F> {
    cols: &'a Columns<T, F>,
    g: ArrayView1<'a, T>,
    mu: T,
    /// Basic structural variables.
    basic: Vec<(usize, i8)>,
    /// Nonbasic slack rows and the bound (±1 times μ) they sit at.
    fixed: Vec<(usize, i8)>,
    /// Row status: 0 basic slack, ±1 nonbasic at ±μ.
    row_state: Vec<i8>,
    /// Structural status: 0 nonbasic, ±1 basic as p/q.
    col_state: Vec<i8>,
}

impl<'a, T: Real, F: Fn(usize) -> Array1<T>> DualSimplex<'a, T, F> {
    fn new(cols: &'a Columns<T, F>, g: ArrayView1<'a, T>, mu: T) -> Self {
        let m = g.len();
        Self {
            cols,
            g,
            mu,
            basic: Vec::new(),
            fixed: Vec::new(),
            row_state: vec![0; m],
            col_state: vec![0; m],
        }
    }

    /// `K = H[fixed, basic] diag(sign)`.
    fn kernel(&self) -> Array2<T> {
        let s = self.basic.len();
        let mut k = Array2::zeros((s, s));
        for (b, &(j, sign)) in self.basic.iter().enumerate() {
            let col = self.cols.get(j);
            let sg = T::of(f64::from(sign));
            for (a, &(i, _)) in self.fixed.iter().enumerate() {
                k[[a, b]] = col[i] * sg;
            }
        }
        k
    }

    /// `Σ_a v_a H[:, rows_a]`.
    fn combine(&self, rows: impl Iterator<Item = (usize, T)>) -> Array1<T> {
        let mut out = Array1::zeros(self.g.len());
        for (i, v) in rows {
            if v != T::zero() {
                out.scaled_add(v, &*self.cols.get(i));
            }
        }
        out
    }

    fn run(mut self) -> std::result::Result<DantzigSolution<T>, Outcome> {
        let m = self.g.len();
        let scale = self.g.iter().fold(self.mu, |a, v| a.max(v.abs())).max(T::one());
        let primal_tol = T::of(1e-11) * scale;
        let dual_tol = T::of(1e-12);
        let pivot_tol = T::of(1e-10);
        let max_iter = 20 * m + 1000;

        for iter in 0..max_iter {
            let s = self.basic.len();
            let lu = if s > 0 {
                match Lu::new(self.kernel().view()) {
                    Ok(lu) => Some(lu),
                    Err(_) => return Err(Outcome::Stalled),
                }
            } else {
                None
            };

            // primal values
            let rhs = Array1::from_iter(
                self.fixed.iter().map(|&(i, b)| self.g[i] + self.mu * T::of(f64::from(b))),
            );
            let xb = lu.as_ref().map_or_else(|| Array1::zeros(0), |lu| lu.solve(rhs.view()));
            let aw = self.combine(self.basic.iter().zip(xb.iter()).map(|(&(j, sign), &x)| (j, x * T::of(f64::from(sign)))));
            let z = &aw - &self.g;

            // most infeasible basic variable
            let mut leave: Option<(Var, T, bool)> = None;
            for (b, &(j, sign)) in self.basic.iter().enumerate() {
                if xb[b] < -primal_tol {
                    let inf = -xb[b];
                    if leave.is_none_or(|(_, w, _)| inf > w) {
                        leave = Some((Var::Structural { j, sign }, inf, false));
                    }
                }
            }
            for i in 0..m {
                if self.row_state[i] == 0 {
                    let inf = z[i].abs() - self.mu;
                    if inf > primal_tol && leave.is_none_or(|(_, w, _)| inf > w) {
                        leave = Some((Var::Slack { i }, inf, z[i] > T::zero()));
                    }
                }
            }

            // dual values y on the fixed rows: Kᵀ y = 1
            let y_fixed = lu.as_ref().map_or_else(|| Array1::zeros(0), |lu| lu.solve_transpose(Array1::ones(s).view()));
            let hy = self.combine(self.fixed.iter().zip(y_fixed.iter()).map(|(&(i, _), &y)| (i, y)));

            let Some((leaving, _, to_upper)) = leave else {
                let mut w = Array1::zeros(m);
                for (b, &(j, sign)) in self.basic.iter().enumerate() {
                    w[j] = xb[b] * T::of(f64::from(sign));
                }
                let l1_norm = w.iter().map(|v: &T| v.abs()).sum::<T>();
                let max_residual = z.iter().fold(T::zero(), |a, v| a.max(v.abs()));
                let hy_sup = hy.iter().fold(T::one(), |a, v| a.max(v.abs()));
                let (gy, y1) = self
                    .fixed
                    .iter()
                    .zip(y_fixed.iter())
                    .fold((T::zero(), T::zero()), |(gy, y1), (&(i, _), &y)| (gy + self.g[i] * y, y1 + y.abs()));
                let lower_bound = (gy - self.mu * y1) / hy_sup;
                return Ok(DantzigSolution {
                    w,
                    l1_norm,
                    lower_bound,
                    max_residual,
                    iterations: iter,
                });
            };

            // row of B⁻¹ for the leaving variable, expressed on the fixed rows
            let (rho_fixed, extra) = match leaving {
                Var::Structural { j, .. } => {
                    let pos = self.basic.iter().position(|&(c, _)| c == j).expect("basic");
                    let mut e = Array1::zeros(s);
                    e[pos] = T::one();
                    (lu.as_ref().expect("nonempty basis").solve_transpose(e.view()), None)
                }
                Var::Slack { i } => {
                    let rhs = Array1::from_iter(
                        self.basic.iter().map(|&(j, sign)| self.cols.get(j)[i] * T::of(f64::from(sign))),
                    );
                    let r = lu.as_ref().map_or_else(|| Array1::zeros(0), |lu| lu.solve_transpose(rhs.view()));
                    (r, Some(i))
                }
            };
            let hrho = self.combine(
                self.fixed
                    .iter()
                    .zip(rho_fixed.iter())
                    .map(|(&(i, _), &r)| (i, r))
                    .chain(extra.map(|i| (i, -T::one()))),
            );

            // Harris ratio test; a = dir·α, candidates keep the reduced cost sign.
            let dir = if to_upper { T::one() } else { -T::one() };
            let mut cands: Vec<(Var, T, T)> = Vec::new();
            for j in 0..m {
                for sign in [1i8, -1] {
                    // the partner of a basic column is eligible only when its
                    // twin is the one leaving; otherwise its α vanishes
                    if self.col_state[j] == sign {
                        continue;
                    }
                    let sg = T::of(f64::from(sign));
                    let a = dir * sg * hrho[j];
                    if a > pivot_tol {
                        let d = (T::one() - sg * hy[j]).max(T::zero());
                        cands.push((Var::Structural { j, sign }, d, a));
                    }
                }
            }
            for (a_idx, &(i, bound)) in self.fixed.iter().enumerate() {
                let a = -dir * rho_fixed[a_idx];
                let d = y_fixed[a_idx];
                if bound < 0 && a > pivot_tol {
                    cands.push((Var::Slack { i }, d.max(T::zero()), a));
                } else if bound > 0 && a < -pivot_tol {
                    cands.push((Var::Slack { i }, d.min(T::zero()), a));
                }
            }
            if cands.is_empty() {
                return Err(Outcome::Infeasible);
            }
            let bound = cands
                .iter()
                .map(|&(_, d, a)| (d + dual_tol * a.signum()) / a)
                .fold(T::infinity(), T::min);
            let (entering, _, _) = cands
                .iter()
                .filter(|&&(_, d, a)| d / a <= bound)
                .fold(None::<(Var, T, T)>, |best, &c| match best {
                    Some(b) if b.2.abs() >= c.2.abs() => Some(b),
                    _ => Some(c),
                })
                .expect("nonempty candidate set");

            match leaving {
                Var::Structural { j, .. } => {
                    self.basic.retain(|&(c, _)| c != j);
                    self.col_state[j] = 0;
                }
                Var::Slack { i } => {
                    let b = if to_upper { 1 } else { -1 };
                    self.fixed.push((i, b));
                    self.row_state[i] = b;
                }
            }
            match entering {
                Var::Structural { j, sign } => {
                    self.basic.retain(|&(c, _)| c != j);
                    self.basic.push((j, sign));
                    self.col_state[j] = sign;
                }
                Var::Slack { i } => {
                    self.fixed.retain(|&(r, _)| r != i);
                    self.row_state[i] = 0;
                }
            }
        }
        Err(Outcome::Stalled)
    }
}
