use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Scalar type a tensor can hold. Implemented for `f32` (training) and
/// `f64` (gradient checking).
pub trait Element:
    num_traits::Float + num_traits::FromPrimitive + num_traits::ToPrimitive + Debug + Display + Sum + 'static
{
    const DTYPE: &'static str;
}

impl Element for f32 {
    const DTYPE: &'static str = "f32";
}

impl Element for f64 {
    const DTYPE: &'static str = "f64";
}

/// Shorthand for converting an `f64` literal into the element type.
#[inline]
pub fn lit<E: Element>(x: f64) -> E {
    E::from_f64(x).expect("literal conversion")
}
