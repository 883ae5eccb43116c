//! Scalar abstraction for the analytic parts of the crate.
//!
//! Closed forms (stationary laws, expectation bounds) are written against
//! [`Scalar`], which covers `f32`, `f64` and exact rationals. Routines that
//! need square roots or transcendental functions use [`RealScalar`].

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

pub trait Scalar: Num + Clone + PartialOrd + FromPrimitive + ToPrimitive + Debug {
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("finite value")
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where T: Num + Clone + PartialOrd + FromPrimitive + ToPrimitive + Debug {}

pub trait RealScalar: Scalar + Float {}

impl<T> RealScalar for T where T: Scalar + Float {}

pub type Rational = Ratio<BigInt>;

/// `x^k` by repeated squaring; works for any [`Scalar`].
pub fn powi<T: Scalar>(x: &T, k: u32) -> T {
    num_traits::pow(x.clone(), k as usize)
}

/// Exact rational `num/den`.
pub fn rational(num: i64, den: i64) -> Rational {
    Ratio::new(BigInt::from(num), BigInt::from(den))
}
