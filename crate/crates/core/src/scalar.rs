//! Scalar abstraction for the SLO-to-core arithmetic.
//!
//! The window model only needs field arithmetic, ordering and a way to round
//! a non-negative quantity to a whole number of cores. Floats are used by the
//! simulator; exact rationals are used where integer results must not depend
//! on rounding of intermediate values.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{Float, Num};

/// A number type usable by the window model.
pub trait Scalar: Num + Copy + PartialOrd + Debug {
    fn from_u64(v: u64) -> Self;

    /// Smallest integer `>= self`, saturating at zero and `u64::MAX`.
    fn ceil_count(self) -> u64;

    /// Largest integer `<= self`, saturating at zero and `u64::MAX`.
    fn floor_count(self) -> u64;
}

fn float_to_count<F: Float>(v: F) -> u64 {
    if v.is_nan() || v <= F::zero() {
        0
    } else {
        v.to_u64().unwrap_or(u64::MAX)
    }
}

macro_rules! impl_float_scalar {
    ($($t:ty),*) => {$(
        impl Scalar for $t {
            fn from_u64(v: u64) -> Self {
                v as $t
            }

            fn ceil_count(self) -> u64 {
                float_to_count(self.ceil())
            }

            fn floor_count(self) -> u64 {
                float_to_count(self.floor())
            }
        }
    )*};
}

impl_float_scalar!(f32, f64);

macro_rules! impl_ratio_scalar {
    ($($t:ty),*) => {$(
        impl Scalar for Ratio<$t> {
            fn from_u64(v: u64) -> Self {
                Ratio::from_integer(<$t>::try_from(v).expect("value fits the rational base type"))
            }

            fn ceil_count(self) -> u64 {
                let c = self.ceil().to_integer();
                if c <= 0 { 0 } else { u64::try_from(c).unwrap_or(u64::MAX) }
            }

            fn floor_count(self) -> u64 {
                let f = self.floor().to_integer();
                if f <= 0 { 0 } else { u64::try_from(f).unwrap_or(u64::MAX) }
            }
        }
    )*};
}

impl_ratio_scalar!(i64, i128);
