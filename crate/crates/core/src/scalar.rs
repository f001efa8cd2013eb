//! Scalar abstraction shared by the exact and floating-point code paths.
//!
//! Everything upstream of the eigensolver (Weingarten values, Haar moments,
//! state values, moment matrices) is written against [`Scalar`], so the same
//! code runs over exact rationals or over `f64`/`f32` for quick estimates.

use std::fmt::Debug;
use std::ops::Neg;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, ToPrimitive};

pub trait Scalar: Num + Neg<Output = Self> + Clone + Debug + PartialEq + Send + Sync + 'static {
    /// `true` when arithmetic is exact and equality checks are meaningful.
    const EXACT: bool;

    fn from_i128(value: i128) -> Self;

    fn from_rational(value: &BigRational) -> Self;

    fn to_f64(&self) -> f64;

    fn ratio(numer: i128, denom: i128) -> Self {
        Self::from_i128(numer) / Self::from_i128(denom)
    }
}

macro_rules! impl_float_scalar {
    ($f:ty) => {
        impl Scalar for $f {
            const EXACT: bool = false;

            fn from_i128(value: i128) -> Self {
                value as $f
            }

            fn from_rational(value: &BigRational) -> Self {
                ToPrimitive::to_f64(value).unwrap_or(f64::NAN) as $f
            }

            fn to_f64(&self) -> f64 {
                *self as f64
            }
        }
    };
}

impl_float_scalar!(f32);
impl_float_scalar!(f64);

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn from_i128(value: i128) -> Self {
        BigRational::from_integer(BigInt::from(value))
    }

    fn from_rational(value: &BigRational) -> Self {
        value.clone()
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Parses `"p/q"` or `"p"` into an exact rational.
pub fn parse_rational(text: &str) -> Option<BigRational> {
    let text = text.trim();
    let (numer, denom) = match text.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (text, "1"),
    };
    let numer: BigInt = numer.parse().ok()?;
    let denom: BigInt = denom.parse().ok()?;
    if denom == BigInt::from(0) {
        return None;
    }
    Some(BigRational::new(numer, denom))
}

/// Formats a rational as `"p/q"`, or `"p"` for integers.
pub fn format_rational(value: &BigRational) -> String {
    if value.is_integer() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}
