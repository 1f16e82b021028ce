//! Scalar abstraction: the whole engine is generic over the float type.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by every kernel in this workspace.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from an `f64` literal. Panics only on NaN
    /// inputs, which never appear in the constants this crate feeds it.
    fn from_f64_c(v: f64) -> Self {
        Self::from_f64(v).expect("constant not representable")
    }

    fn to_f64_c(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }

    fn two() -> Self {
        Self::from_f64_c(2.0)
    }

    fn half() -> Self {
        Self::from_f64_c(0.5)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
