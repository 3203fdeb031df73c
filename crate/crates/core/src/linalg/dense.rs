//! Small dense factorizations. Sizes here are at most a few hundred, so
//! straightforward row-oriented loops are adequate.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::Real;

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Clone, Debug)]
pub struct Lu<T> {
    lu: Array2<T>,
    perm: Vec<usize>,
}

impl<T: Real> Lu<T> {
    pub fn new(a: ArrayView2<'_, T>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!("LU of a {}x{} matrix", n, a.ncols())));
        }
        let mut lu = a.to_owned();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = lu.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let tiny = scale * T::epsilon() * T::of_usize(n.max(1));
        for c in 0..n {
            let (p, pmax) = (c..n)
                .map(|r| (r, lu[[r, c]].abs()))
                .fold((c, T::neg_infinity()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax <= tiny || pmax == T::zero() {
                return Err(Error::Singular);
            }
            if p != c {
                for j in 0..n {
                    lu.swap([p, j], [c, j]);
                }
                perm.swap(p, c);
            }
            let piv = lu[[c, c]];
            for r in c + 1..n {
                let f = lu[[r, c]] / piv;
                lu[[r, c]] = f;
                if f != T::zero() {
                    for j in c + 1..n {
                        let u = lu[[c, j]];
                        lu[[r, j]] -= f * u;
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, b: ArrayView1<'_, T>) -> Array1<T> {
        let n = self.perm.len();
        let mut x: Array1<T> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut s = x[r];
            for j in 0..r {
                s -= self.lu[[r, j]] * x[j];
            }
            x[r] = s;
        }
        for r in (0..n).rev() {
            let mut s = x[r];
            for j in r + 1..n {
                s -= self.lu[[r, j]] * x[j];
            }
            x[r] = s / self.lu[[r, r]];
        }
        x
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: ArrayView1<'_, T>) -> Array1<T> {
        let n = self.perm.len();
        let mut z = b.to_owned();
        // Uᵀ z = b
        for r in 0..n {
            let mut s = z[r];
            for j in 0..r {
                s -= self.lu[[j, r]] * z[j];
            }
            z[r] = s / self.lu[[r, r]];
        }
        // Lᵀ w = z
        for r in (0..n).rev() {
            let mut s = z[r];
            for j in r + 1..n {
                s -= self.lu[[j, r]] * z[j];
            }
            z[r] = s;
        }
        let mut x = Array1::zeros(n);
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = z[i];
        }
        x
    }
}

/// Cholesky factorization `A = L Lᵀ` of a symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    l: Array2<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn new(a: ArrayView2<'_, T>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!("Cholesky of a {}x{} matrix", n, a.ncols())));
        }
        let scale = (0..n).fold(T::zero(), |m, i| m.max(a[[i, i]].abs()));
        let floor = scale * T::epsilon() * T::of_usize(n.max(1)) * T::of(16.0);
        let mut l = Array2::<T>::zeros((n, n));
        for j in 0..n {
            let mut s = a[[j, j]];
            for p in 0..j {
                s -= l[[j, p]] * l[[j, p]];
            }
            if s <= floor || !s.is_finite() {
                return Err(Error::Singular);
            }
            let ljj = s.sqrt();
            l[[j, j]] = ljj;
            for i in j + 1..n {
                let mut s = a[[i, j]];
                for p in 0..j {
                    s -= l[[i, p]] * l[[j, p]];
                }
                l[[i, j]] = s / ljj;
            }
        }
        Ok(Self { l })
    }

    pub fn solve(&self, b: ArrayView1<'_, T>) -> Array1<T> {
        let n = self.l.nrows();
        let mut z = b.to_owned();
        for i in 0..n {
            let mut s = z[i];
            for p in 0..i {
                s -= self.l[[i, p]] * z[p];
            }
            z[i] = s / self.l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for p in i + 1..n {
                s -= self.l[[p, i]] * z[p];
            }
            z[i] = s / self.l[[i, i]];
        }
        z
    }
}

pub fn lu_solve<T: Real>(a: ArrayView2<'_, T>, b: ArrayView1<'_, T>) -> Result<Array1<T>> {
    Ok(Lu::new(a)?.solve(b))
}

pub fn cholesky_solve<T: Real>(a: ArrayView2<'_, T>, b: ArrayView1<'_, T>) -> Result<Array1<T>> {
    Ok(Cholesky::new(a)?.solve(b))
}

pub fn inverse<T: Real>(a: ArrayView2<'_, T>) -> Result<Array2<T>> {
    let lu = Lu::new(a)?;
    let n = a.nrows();
    let mut inv = Array2::zeros((n, n));
    let mut e = Array1::zeros(n);
    for j in 0..n {
        e[j] = T::one();
        inv.column_mut(j).assign(&lu.solve(e.view()));
        e[j] = T::zero();
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn lu_solves_and_transposes() {
        let a = array![[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 1.0]];
        let b = array![1.0, 2.0, 3.0];
        let lu = Lu::new(a.view()).unwrap();
        let x = lu.solve(b.view());
        assert_abs_diff_eq!(a.dot(&x), b, epsilon = 1e-12);
        let xt = lu.solve_transpose(b.view());
        assert_abs_diff_eq!(a.t().dot(&xt), b, epsilon = 1e-12);
    }

    #[test]
    fn singular_detected() {
        let a = array![[1.0, 2.0], [2.0, 4.0]];
        assert!(matches!(Lu::new(a.view()), Err(Error::Singular)));
        assert!(matches!(Cholesky::new(a.view()), Err(Error::Singular)));
    }

    #[test]
    fn cholesky_matches_lu() {
        let a = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let b = array![1.0, -1.0, 0.5];
        assert_abs_diff_eq!(
            cholesky_solve(a.view(), b.view()).unwrap(),
            lu_solve(a.view(), b.view()).unwrap(),
            epsilon = 1e-13
        );
        let inv = inverse(a.view()).unwrap();
        assert_abs_diff_eq!(inv.dot(&a), Array2::eye(3), epsilon = 1e-13);
    }
}
