//! Stationary covariance kernels with unit variance and unit lengthscale.
//!
//! The latent model carries amplitude in its output bin edges and distances
//! in its warping increments, so the kernel itself stays fixed; the same
//! primitives back the expected-improvement baseline, which scales distances
//! before calling in.

use crate::error::{Error, Result};
use crate::linalg::{cholesky_escalate, Chol, Mat};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Matern32,
    SquaredExponential,
}

/// Kernel family plus the jitter added to matrix diagonals before
/// factorisation. Variance and lengthscale are fixed at one.
#[derive(Debug, Clone, Copy)]
pub struct KernelSpec<S> {
    pub family: KernelFamily,
    pub jitter: S,
}

impl<S: Scalar> KernelSpec<S> {
    /// Default jitter is 1e-10; cells can make latent points nearly
    /// coincident, so factorisation escalates it up to 1e-4.
    pub fn new(family: KernelFamily) -> Self {
        KernelSpec { family, jitter: S::c(1e-10) }
    }

    pub fn matern32() -> Self {
        Self::new(KernelFamily::Matern32)
    }

    pub fn squared_exponential() -> Self {
        Self::new(KernelFamily::SquaredExponential)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.jitter > S::zero() && self.jitter <= S::c(1e-4)) {
            return Err(Error::domain("jitter must lie in (0, 1e-4]"));
        }
        Ok(())
    }

    /// k(r) for Euclidean distance r; k(0) = 1 and k is strictly decreasing.
    pub fn kernel_value(&self, r: S) -> Result<S> {
        if !r.is_finite() || r < S::zero() {
            return Err(Error::domain(format!("kernel distance must be finite and non-negative, got {r:?}")));
        }
        Ok(self.value_unchecked(r))
    }

    #[inline]
    fn value_unchecked(&self, r: S) -> S {
        match self.family {
            KernelFamily::Matern32 => {
                let a = S::c(3.0).sqrt() * r;
                (S::one() + a) * (-a).exp()
            }
            KernelFamily::SquaredExponential => (-(r * r) * S::c(0.5)).exp(),
        }
    }

    /// k'(r)/r, which stays finite at r = 0 for both families; used by the
    /// chain rule through pairwise distances.
    #[inline]
    pub fn deriv_over_r(&self, r: S) -> S {
        match self.family {
            KernelFamily::Matern32 => -S::c(3.0) * (-(S::c(3.0).sqrt() * r)).exp(),
            KernelFamily::SquaredExponential => -(-(r * r) * S::c(0.5)).exp(),
        }
    }

    /// Symmetric covariance matrix over rows of `points` (unit diagonal).
    pub fn cov_matrix(&self, points: &Mat<S>) -> Result<Mat<S>> {
        if points.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite coordinate in covariance input"));
        }
        let n = points.nrows();
        let mut k = Mat::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = S::one();
            for j in (i + 1)..n {
                let r = Mat::row_dist(points.row(i), points.row(j));
                let v = self.value_unchecked(r);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        Ok(k)
    }
}

/// Lower-triangular factor of `m + jitter I`, escalating jitter tenfold up
/// to 1e-4 on failure.
pub fn chol_factor<S: Scalar>(m: &Mat<S>, jitter: S) -> Result<Chol<S>> {
    if !m.is_symmetric(S::c(1e-8)) {
        return Err(Error::domain("chol_factor requires a symmetric matrix"));
    }
    cholesky_escalate(m, jitter)
}
