//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point type the microgrid model is evaluated in (`f32` or `f64`).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Absolute tolerance for constraint and grid-membership checks.
    fn tolerance() -> Self;

    /// Lossy conversion from `f64`; panics only on NaN-free values that do not fit, which
    /// cannot happen for `f32`/`f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f64 {
    #[inline]
    fn tolerance() -> Self {
        1e-9
    }
}

impl Scalar for f32 {
    // f32 carries ~7 significant digits; quantities here are O(1e2).
    #[inline]
    fn tolerance() -> Self {
        1e-4
    }
}

/// `x` clipped below at zero, i.e. `[x]^+`.
#[inline]
pub fn positive_part<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_round_trip() {
        assert_eq!(f64::lit(0.3), 0.3);
        assert_eq!(f32::lit(0.3), 0.3_f32);
        assert_eq!(positive_part(-2.0_f64), 0.0);
        assert_eq!(positive_part(2.5_f32), 2.5);
    }
}
