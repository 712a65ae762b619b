//! Floating-point scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar the solvers are generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal; never fails for the supported types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `(1 - e^{-x}) / x`, evaluated stably near zero.
#[inline]
pub fn phi1<T: Scalar>(x: T) -> T {
    if x.abs() < T::lit(1e-4) {
        T::one() - x / T::lit(2.0) + x * x / T::lit(6.0)
    } else {
        -(-x).exp_m1() / x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi1_matches_closed_form() {
        for &x in &[1e-8_f64, 1e-5, 1e-3, 0.1, 1.0, 25.0] {
            let exact = -(-x).exp_m1() / x;
            assert!((phi1(x) - exact).abs() < 1e-12 * exact.max(1.0), "x={x}");
        }
        assert!((phi1(0.0_f32) - 1.0).abs() < 1e-7);
    }
}
