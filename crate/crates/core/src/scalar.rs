//! Floating-point abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used by the solvers and estimators.
///
/// Implemented for `f32` and `f64`. All statistical routines are written
/// against this trait; the concrete aliases at the crate root fix `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Soft-thresholding operator `sign(z) * max(|z| - t, 0)`.
    fn soft_threshold(self, t: Self) -> Self {
        if self > t {
            self - t
        } else if self < -t {
            self + t
        } else {
            Self::zero()
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_matches_definition() {
        assert_eq!(3.0f64.soft_threshold(1.0), 2.0);
        assert_eq!((-3.0f64).soft_threshold(1.0), -2.0);
        assert_eq!(0.5f64.soft_threshold(1.0), 0.0);
        assert_eq!(2.5f32.soft_threshold(0.5), 2.0);
    }
}
