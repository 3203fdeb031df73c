use std::sync::OnceLock;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, CowArray, Ix2};

use crate::Real;

/// Read access to a symmetric matrix by column.
pub trait SymOperator<T>: Sync {
    fn dim(&self) -> usize;
    fn diag(&self, j: usize) -> T;
    fn column(&self, j: usize) -> ArrayView1<'_, T>;
}

/// Weighted Gram matrix `Xᵀ diag(w) X / n`.
///
/// The dense variant is formed with one matrix product; the lazy variant
/// computes (and caches) only the columns that are touched, which is what
/// single-coordinate inference needs when `d` is large.
pub enum Gram<'a, T> {
    Dense(Array2<T>),
    Lazy(LazyGram<'a, T>),
}

pub struct LazyGram<'a, T> {
    x: CowArray<'a, T, Ix2>,
    weights: Option<Array1<T>>,
    scale: T,
    diag: Array1<T>,
    cols: Vec<OnceLock<Array1<T>>>,
}

impl<'a, T: Real> Gram<'a, T> {
    pub fn dense(x: ArrayView2<'_, T>, weights: Option<ArrayView1<'_, T>>) -> Gram<'a, T> {
        Gram::Dense(weighted_gram(x, weights))
    }

    pub fn lazy(x: ArrayView2<'a, T>, weights: Option<ArrayView1<'_, T>>) -> Gram<'a, T> {
        let n = x.nrows().max(1);
        let scale = T::one() / T::of_usize(n);
        let diag = Array1::from_shape_fn(x.ncols(), |j| {
            let col = x.column(j);
            match weights {
                None => col.dot(&col) * scale,
                Some(w) => col.iter().zip(w.iter()).map(|(&a, &wi)| a * a * wi).sum::<T>() * scale,
            }
        });
        Gram::Lazy(LazyGram {
            cols: (0..x.ncols()).map(|_| OnceLock::new()).collect(),
            x: CowArray::from(x),
            weights: weights.map(|w| w.to_owned()),
            scale,
            diag,
        })
    }

    /// Dense when most columns will be needed, lazy otherwise.
    pub fn for_columns(x: ArrayView2<'a, T>, weights: Option<ArrayView1<'_, T>>, needed: usize) -> Gram<'a, T> {
        if needed * 4 >= x.ncols() {
            Gram::dense(x, weights)
        } else {
            Gram::lazy(x, weights)
        }
    }

    pub fn to_dense(&self) -> Array2<T> {
        match self {
            Gram::Dense(m) => m.clone(),
            Gram::Lazy(_) => {
                let d = self.dim();
                let mut m = Array2::zeros((d, d));
                for j in 0..d {
                    m.column_mut(j).assign(&self.column(j));
                }
                m
            }
        }
    }
}

fn weighted_gram<T: Real>(x: ArrayView2<'_, T>, weights: Option<ArrayView1<'_, T>>) -> Array2<T> {
    let n = T::of_usize(x.nrows().max(1));
    let m = match weights {
        None => x.t().dot(&x),
        Some(w) => {
            let mut xw = x.to_owned();
            for (mut row, &wi) in xw.rows_mut().into_iter().zip(w.iter()) {
                row *= wi.sqrt();
            }
            xw.t().dot(&xw)
        }
    };
    m / n
}

impl<T: Real> SymOperator<T> for Gram<'_, T> {
    fn dim(&self) -> usize {
        match self {
            Gram::Dense(m) => m.nrows(),
            Gram::Lazy(g) => g.diag.len(),
        }
    }

    fn diag(&self, j: usize) -> T {
        match self {
            Gram::Dense(m) => m[[j, j]],
            Gram::Lazy(g) => g.diag[j],
        }
    }

    fn column(&self, j: usize) -> ArrayView1<'_, T> {
        match self {
            Gram::Dense(m) => m.column(j),
            Gram::Lazy(g) => g.cols[j]
                .get_or_init(|| {
                    let xj = g.x.column(j);
                    let v = match &g.weights {
                        None => xj.to_owned(),
                        Some(w) => &xj * w,
                    };
                    g.x.t().dot(&v) * g.scale
                })
                .view(),
        }
    }
}

impl<T: Real> SymOperator<T> for Array2<T> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn diag(&self, j: usize) -> T {
        self[[j, j]]
    }

    fn column(&self, j: usize) -> ArrayView1<'_, T> {
        self.index_axis(Axis(1), j)
    }
}
