use ndarray::{Array1, ArrayView1};

use crate::Real;

/// Neumaier-compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum<T> {
    sum: T,
    comp: T,
}

impl<T: Real> NeumaierSum<T> {
    pub fn new() -> Self {
        Self {
            sum: T::zero(),
            comp: T::zero(),
        }
    }

    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> T {
        self.sum + self.comp
    }
}

pub fn compensated_sum<T: Real, I: IntoIterator<Item = T>>(it: I) -> T {
    let mut acc = NeumaierSum::new();
    for x in it {
        acc.add(x);
    }
    acc.value()
}

/// Coordinate-wise compensated mean of equal-length vectors.
///
/// With a single vector the input is returned unchanged.
pub fn compensated_mean<T: Real>(vs: &[ArrayView1<'_, T>]) -> Array1<T> {
    assert!(!vs.is_empty());
    let d = vs[0].len();
    if vs.len() == 1 {
        return vs[0].to_owned();
    }
    let k = T::of_usize(vs.len());
    Array1::from_shape_fn(d, |i| compensated_sum(vs.iter().map(|v| v[i])) / k)
}
