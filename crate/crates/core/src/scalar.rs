use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::Serialize;

/// Floating point type the solvers and checkers are generic over.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + LowerExp
    + Default
    + Sum
    + Serialize
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Panics only for values that cannot be
    /// represented at all, which never happens for the finite constants used here.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Largest value whose square is still finite. Used as a hard overflow guard.
    fn overflow_guard() -> Self {
        Self::max_value().sqrt()
    }

    /// Default absolute tolerance floor for this precision.
    fn tol_floor() -> Self {
        Self::epsilon() * Self::lit(100.0)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand for `S::lit`.
#[inline]
pub fn c<S: Scalar>(x: f64) -> S {
    S::lit(x)
}
