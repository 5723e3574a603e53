//! Floating-point scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumCast};

/// Real scalar the library is generic over: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumCast + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts a literal constant. Only meant for values representable in `Self`.
    fn lit(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("literal not representable")
    }

    fn count(n: usize) -> Self {
        <Self as NumCast>::from(n).expect("count not representable")
    }

    fn two() -> Self {
        Self::one() + Self::one()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Total order on scalars that sorts NaN last. Used wherever a deterministic
/// ordering is required.
pub(crate) fn total_cmp<T: Scalar>(a: T, b: T) -> std::cmp::Ordering {
    match a.partial_cmp(&b) {
        Some(o) => o,
        None => a.is_nan().cmp(&b.is_nan()),
    }
}
