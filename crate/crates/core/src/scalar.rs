//! Scalar abstraction shared by the numeric modules.
//!
//! Everything below `experiments` is generic over [`Real`], implemented for
//! `f32` and `f64`. The tolerances quoted throughout the crate assume `f64`;
//! `f32` instantiations are useful for quick exploratory runs only.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + FftNum
    + Sum
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into `Self` (rounding for `f32`).
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn count(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("representable count")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// `|x|`; `Float` and `Signed` both provide `abs`, this picks one.
    #[inline]
    fn mag(self) -> Self {
        Float::abs(self)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `e^{iθ}`.
#[inline]
pub fn cis<T: Real>(theta: T) -> Complex<T> {
    Complex::new(theta.cos(), theta.sin())
}

#[inline]
pub fn cplx<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

/// Imaginary unit.
#[inline]
pub fn im_unit<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::one())
}
