//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar the optimizers and envelope solvers are generic over.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Smallest Huber width used by the prox solver; terms whose inner value
    /// is within this distance of a kink are treated as sitting on it.
    fn kink_tolerance() -> Self;
}

impl Scalar for f64 {
    fn kink_tolerance() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    fn kink_tolerance() -> Self {
        1e-5
    }
}

/// Lossless-enough conversion from an `f64` literal.
#[inline]
pub fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

/// Widen to `f64` for reporting.
#[inline]
pub fn widen<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
