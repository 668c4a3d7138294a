//! Standard normal CDF/PDF and numerically careful interval probabilities.

use crate::scalar::Scalar;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const SQRT_2PI: f64 = 2.5066282746310002;

/// Standard normal CDF via the complementary error function.
#[inline]
pub fn norm_cdf<S: Scalar>(z: S) -> S {
    S::c(0.5) * (-z / S::c(SQRT_2)).erfc()
}

/// Upper tail 1 - Phi(z), accurate for large positive z.
#[inline]
pub fn norm_sf<S: Scalar>(z: S) -> S {
    S::c(0.5) * (z / S::c(SQRT_2)).erfc()
}

#[inline]
pub fn norm_pdf<S: Scalar>(z: S) -> S {
    (-(z * z) * S::c(0.5)).exp() / S::c(SQRT_2PI)
}

/// Phi(hi) - Phi(lo) without catastrophic cancellation. Requires lo <= hi;
/// infinite bounds are fine (the tails evaluate to exact 0 or 1).
pub fn interval_prob<S: Scalar>(lo: S, hi: S) -> S {
    debug_assert!(!(lo > hi));
    let p = if lo >= S::zero() {
        // both in the upper tail: difference of survival functions
        norm_sf(lo) - norm_sf(hi)
    } else {
        norm_cdf(hi) - norm_cdf(lo)
    };
    p.max(S::zero())
}
