//! Scalar abstraction for the numeric core: f32 or f64.

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the rate model and planner are generic over.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + core::fmt::Debug + core::fmt::Display + Send + Sync + 'static
{
    /// Conversion from an `f64` literal.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    /// `10^self`.
    fn exp10(self) -> Self {
        Self::of(10.0).powf(self)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Binary entropy H2(x) = -x log2 x - (1-x) log2 (1-x), zero outside (0, 1).
pub fn binary_entropy<F: Real>(x: F) -> F {
    if x <= F::zero() || x >= F::one() {
        return F::zero();
    }
    let one = F::one();
    -(x * x.log2()) - (one - x) * (one - x).log2()
}
