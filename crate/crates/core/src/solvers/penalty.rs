use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    L1,
    Scad,
    Mcp,
}

/// Separable sparsity penalty `P(β) = Σ p(β_v)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Penalty<T> {
    pub kind: PenaltyKind,
    pub lambda: T,
    /// SCAD concavity parameter.
    pub a: T,
    /// MCP concavity parameter.
    pub b: T,
}

impl<T: Real> Penalty<T> {
    pub const DEFAULT_SCAD_A: f64 = 3.7;
    pub const DEFAULT_MCP_B: f64 = 3.0;

    pub fn l1(lambda: T) -> Self {
        Self {
            kind: PenaltyKind::L1,
            lambda,
            a: T::of(Self::DEFAULT_SCAD_A),
            b: T::of(Self::DEFAULT_MCP_B),
        }
    }

    pub fn scad(lambda: T, a: T) -> Self {
        Self {
            kind: PenaltyKind::Scad,
            a,
            ..Self::l1(lambda)
        }
    }

    pub fn mcp(lambda: T, b: T) -> Self {
        Self {
            kind: PenaltyKind::Mcp,
            b,
            ..Self::l1(lambda)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= T::zero()) || !self.lambda.is_finite() {
            return Err(Error::InvalidConfig(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        match self.kind {
            PenaltyKind::Scad if !(self.a > T::of(2.0)) => {
                Err(Error::InvalidConfig(format!("SCAD requires a > 2, got {}", self.a)))
            }
            PenaltyKind::Mcp if !(self.b > T::zero()) => {
                Err(Error::InvalidConfig(format!("MCP requires b > 0, got {}", self.b)))
            }
            _ => Ok(()),
        }
    }

    /// `p(t)`.
    pub fn value(&self, t: T) -> T {
        let t = t.abs();
        let l = self.lambda;
        let two = T::of(2.0);
        match self.kind {
            PenaltyKind::L1 => l * t,
            PenaltyKind::Scad => {
                let a = self.a;
                if t <= l {
                    l * t
                } else if t <= a * l {
                    (two * a * l * t - t * t - l * l) / (two * (a - T::one()))
                } else {
                    l * l * (a + T::one()) / two
                }
            }
            PenaltyKind::Mcp => {
                let b = self.b;
                if t <= b * l {
                    l * t - t * t / (two * b)
                } else {
                    b * l * l / two
                }
            }
        }
    }

    /// `p'(t)` for `t >= 0`, taking the right derivative at zero.
    pub fn derivative(&self, t: T) -> T {
        let t = t.abs();
        let l = self.lambda;
        match self.kind {
            PenaltyKind::L1 => l,
            PenaltyKind::Scad => {
                if t <= l {
                    l
                } else {
                    ((self.a * l - t) / (self.a - T::one())).max(T::zero())
                }
            }
            PenaltyKind::Mcp => (l - t / self.b).max(T::zero()),
        }
    }

    pub fn total(&self, beta: ArrayView1<'_, T>) -> T {
        beta.iter().map(|&b| self.value(b)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Trapezoid quadrature of the derivative, independent of the closed forms.
    fn integrate_derivative(p: &Penalty<f64>, t: f64) -> f64 {
        let m = 20_000;
        let h = t.abs() / m as f64;
        (0..m)
            .map(|i| {
                let a = i as f64 * h;
                0.5 * h * (p.derivative(a) + p.derivative(a + h))
            })
            .sum()
    }

    #[test]
    fn closed_forms_match_integral_definition() {
        for p in [Penalty::l1(0.7), Penalty::scad(0.7, 3.7), Penalty::mcp(0.7, 3.0)] {
            for t in [0.0, 0.3, 0.7, 1.5, 2.5, 4.0, -1.2] {
                assert!((p.value(t) - integrate_derivative(&p, t)).abs() < 1e-6, "{p:?} {t}");
            }
        }
    }

    #[test]
    fn validation() {
        assert!(Penalty::l1(-1.0).validate().is_err());
        assert!(Penalty::scad(1.0, 2.0).validate().is_err());
        assert!(Penalty::mcp(1.0, 0.0).validate().is_err());
        assert!(Penalty::scad(1.0, 3.7).validate().is_ok());
    }

    proptest! {
        #[test]
        fn even_nondecreasing_zero_at_origin(lambda in 0.0f64..3.0, t in 0.0f64..10.0, dt in 0.0f64..2.0) {
            for p in [Penalty::l1(lambda), Penalty::scad(lambda, 3.7), Penalty::mcp(lambda, 3.0)] {
                prop_assert_eq!(p.value(0.0), 0.0);
                prop_assert_eq!(p.value(t), p.value(-t));
                prop_assert!(p.value(t + dt) >= p.value(t) - 1e-12);
                prop_assert!(p.value(t) <= lambda * t + 1e-12);
            }
        }
    }
}
