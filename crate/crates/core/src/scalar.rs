use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar used by the numeric parts of the pipeline: f32 or f64.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts from `f64`. Values are always representable up to rounding.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Real")
    }

    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize is representable in every Real")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `ln(1 + e^x)` without overflow.
    fn softplus(self) -> Self {
        if self > Self::zero() {
            self + (-self).exp().ln_1p()
        } else {
            self.exp().ln_1p()
        }
    }

    /// Logistic sigmoid.
    fn sigmoid(self) -> Self {
        if self >= Self::zero() {
            Self::one() / (Self::one() + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::one() + e)
        }
    }

    /// `ln σ(x)`, computed as `-softplus(-x)`.
    fn log_sigmoid(self) -> Self {
        -(-self).softplus()
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sigmoid_is_stable_at_extremes() {
        assert!((0.0f64.log_sigmoid() + std::f64::consts::LN_2).abs() < 1e-15);
        assert!(1000.0f64.log_sigmoid().abs() < 1e-300);
        assert!((-1000.0f64).log_sigmoid().is_finite());
        assert!(((-1000.0f64).log_sigmoid() + 1000.0).abs() < 1e-9);
        assert!(80.0f32.log_sigmoid().is_finite());
    }

    #[test]
    fn sigmoid_symmetry() {
        for x in [-30.0, -2.5, 0.0, 0.7, 12.0] {
            let s: f64 = Real::sigmoid(x) + Real::sigmoid(-x);
            assert!((s - 1.0).abs() < 1e-15);
        }
    }
}
