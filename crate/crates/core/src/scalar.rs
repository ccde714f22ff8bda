//! Scalar abstraction shared by the exact and floating-point code paths.
//!
//! The combinatorial matrices are built once over any [`Scalar`]; with
//! [`Rational`](crate::Rational) every entry is exact, with `f64` or `f32`
//! the same builders give rounded values for quick evaluation.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FromPrimitive, Num, Signed, ToPrimitive};

/// Field element usable by the dense matrix kernels.
pub trait Scalar: Num + Signed + PartialOrd + Clone + Debug + Send + Sync + 'static {
    /// Lossless conversion of a small integer.
    fn from_i64(v: i64) -> Self;

    /// Nearest `f64`, used for reporting only.
    fn to_f64_lossy(&self) -> f64;

    /// `true` only when the value is exactly zero.
    fn is_exact_zero(&self) -> bool {
        self.is_zero()
    }

    /// `k!` computed by repeated multiplication in `Self`.
    fn factorial(k: u32) -> Self {
        (1..=k as i64).fold(Self::one(), |acc, j| acc * Self::from_i64(j))
    }

    /// `base^e` for a non-negative integer exponent.
    fn powu(base: &Self, e: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..e {
            acc = acc * base.clone();
        }
        acc
    }

    /// `base^e` for a signed exponent; panics on `0^{-k}`.
    fn powi(base: &Self, e: i32) -> Self {
        if e >= 0 {
            Self::powu(base, e as u32)
        } else {
            Self::one() / Self::powu(base, e.unsigned_abs())
        }
    }
}

impl Scalar for BigRational {
    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn from_i64(v: i64) -> Self {
        v as f64
    }

    fn to_f64_lossy(&self) -> f64 {
        *self
    }
}

impl Scalar for f32 {
    fn from_i64(v: i64) -> Self {
        v as f32
    }

    fn to_f64_lossy(&self) -> f64 {
        f64::from(*self)
    }
}

/// Floating scalar used by the evaluator: a [`Scalar`] that is also a [`Float`].
pub trait Real: Scalar + Float + FromPrimitive {
    fn c(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite constant")
    }
}

impl Real for f64 {}
impl Real for f32 {}

/// Exact rational built from a numerator and a positive denominator.
pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Convert a rational into any floating scalar.
pub fn rational_to_real<F: Real>(q: &BigRational) -> F {
    F::c(q.to_f64().unwrap_or(f64::NAN))
}

/// `(-1)^k` as a scalar.
pub fn sign_pow<T: Scalar>(k: i64) -> T {
    if k.rem_euclid(2) == 0 {
        T::one()
    } else {
        -T::one()
    }
}

/// Binomial coefficient `C(n, k)`, zero outside `0 <= k <= n`.
pub fn binomial<T: Scalar>(n: i64, k: i64) -> T {
    if k < 0 || n < 0 || k > n {
        return T::zero();
    }
    let k = k.min(n - k);
    let mut num = T::one();
    let mut den = T::one();
    for j in 0..k {
        num = num * T::from_i64(n - j);
        den = den * T::from_i64(j + 1);
    }
    num / den
}

/// Falling factorial `m (m-1) ... (m-len+1)`; zero when it passes through zero.
pub fn falling<T: Scalar>(m: i64, len: i64) -> T {
    (0..len).fold(T::one(), |acc, j| acc * T::from_i64(m - j))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorial_and_binomial_exact() {
        let f: BigRational = Scalar::factorial(21);
        assert_eq!(f, BigRational::from_integer("51090942171709440000".parse().unwrap()));
        assert_eq!(binomial::<BigRational>(10, 3), ratio(120, 1));
        assert_eq!(binomial::<f64>(5, 7), 0.0);
    }

    #[test]
    fn falling_factorial_hits_zero() {
        assert_eq!(falling::<f64>(3, 5), 0.0);
        assert_eq!(falling::<f64>(5, 2), 20.0);
        assert_eq!(falling::<f64>(7, 0), 1.0);
    }

    #[test]
    fn negative_powers() {
        let half = ratio(1, 2);
        assert_eq!(Scalar::powi(&half, -3), ratio(8, 1));
        assert_eq!(Scalar::powi(&2.0f64, -2), 0.25);
    }
}
