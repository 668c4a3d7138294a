use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::StandardNormal;

/// Floating-point scalar used by every numerical routine in this crate.
///
/// The library is generic over the scalar so the same code runs in `f32`
/// and `f64`; the benchmark harness and the pinned tolerances assume `f64`
/// (see the type aliases at the crate root).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Complementary error function, used by the normal CDF.
    fn erfc(self) -> Self;

    /// One draw from U[0, 1).
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One draw from N(0, 1).
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Shorthand for lifting an `f64` constant into the scalar type.
    #[inline]
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("constant not representable in scalar type")
    }

    /// usize -> scalar conversion for counts and sizes.
    #[inline]
    fn of(n: usize) -> Self {
        Self::from_usize(n).expect("count not representable in scalar type")
    }
}

impl Scalar for f64 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfc(self)
    }

    #[inline]
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.gen::<f64>()
    }

    #[inline]
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
}

impl Scalar for f32 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }

    #[inline]
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.gen::<f32>()
    }

    #[inline]
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erfc_reference_values() {
        assert!((Scalar::erfc(0.0f64) - 1.0).abs() < 1e-15);
        assert!((Scalar::erfc(1.0f64) - 0.15729920705028513).abs() < 1e-14);
        assert!(Scalar::erfc(f64::INFINITY) == 0.0);
        assert!(Scalar::erfc(f64::NEG_INFINITY) == 2.0);
    }

    #[test]
    fn constants_lift() {
        let x: f32 = Scalar::c(0.5);
        assert_eq!(x, 0.5f32);
        let n: f64 = Scalar::of(7);
        assert_eq!(n, 7.0);
    }
}
