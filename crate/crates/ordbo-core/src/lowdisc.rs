//! Halton low-discrepancy sequences, optionally with a Cranley-Patterson
//! rotation for scrambling.

use crate::scalar::Scalar;

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse<S: Scalar>(mut i: u64, base: u64) -> S {
    let b = S::of(base as usize);
    let mut f = S::one() / b;
    let mut r = S::zero();
    while i > 0 {
        r = r + f * S::of((i % base) as usize);
        i /= base;
        f = f / b;
    }
    r
}

/// The `index`-th point (1-based internally to skip the origin) of the
/// d-dimensional Halton sequence, shifted modulo one by `shift`.
pub fn halton_point<S: Scalar>(index: usize, shift: &[S]) -> Vec<S> {
    let d = shift.len();
    assert!(d <= PRIMES.len(), "dimension too large for the prime table");
    (0..d)
        .map(|j| {
            let u = radical_inverse::<S>((index + 1) as u64, PRIMES[j]) + shift[j];
            u - u.floor()
        })
        .collect()
}

/// First `count` points of the unshifted sequence.
pub fn halton_points<S: Scalar>(count: usize, d: usize) -> Vec<Vec<S>> {
    let shift = vec![S::zero(); d];
    (0..count).map(|i| halton_point(i, &shift)).collect()
}
