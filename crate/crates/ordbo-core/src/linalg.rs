//! Small dense linear algebra: the models in this crate never exceed a few
//! hundred rows, so a plain row-major matrix with an in-house Cholesky is
//! simpler and faster to audit than pulling in a full linear-algebra stack.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<S> {
    data: Vec<S>,
    rows: usize,
    cols: usize,
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { data: vec![S::zero(); rows * cols], rows, cols }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    /// Builds from a slice of rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |v| v.len());
        if rows.iter().any(|v| v.len() != c) {
            return Err(Error::domain("ragged rows in matrix construction"));
        }
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            data.extend_from_slice(row);
        }
        Ok(Mat { data, rows: r, cols: c })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn push_row(&mut self, row: &[S]) {
        assert_eq!(row.len(), self.cols, "row length mismatch");
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    /// y = A x
    pub fn matvec(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// Euclidean distance between two rows of possibly different matrices.
    pub fn row_dist(a: &[S], b: &[S]) -> S {
        let mut acc = S::zero();
        for (&u, &v) in a.iter().zip(b.iter()) {
            let d = u - v;
            acc = acc + d * d;
        }
        acc.sqrt()
    }

    pub fn frobenius_norm(&self) -> S {
        self.data.iter().map(|&v| v * v).sum::<S>().sqrt()
    }

    pub fn is_symmetric(&self, tol: S) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if (self[(i, j)] - self[(j, i)]).abs() > tol {
                    return false;
                }
            }
        }
        true
    }
}

impl<S: Scalar> std::ops::Index<(usize, usize)> for Mat<S> {
    type Output = S;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S: Scalar> std::ops::IndexMut<(usize, usize)> for Mat<S> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = S::zero();
    for (&x, &y) in a.iter().zip(b.iter()) {
        acc = acc + x * y;
    }
    acc
}

/// Lower-triangular Cholesky factor of `m + jitter * I`.
#[derive(Debug, Clone)]
pub struct Chol<S> {
    l: Mat<S>,
    jitter: S,
}

impl<S: Scalar> Chol<S> {
    pub fn lower(&self) -> &Mat<S> {
        &self.l
    }

    pub fn jitter(&self) -> S {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Solves (L L^T) x = b.
    pub fn solve_vec(&self, b: &[S]) -> Vec<S> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        // forward
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s = s - self.l[(i, j)] * y[j];
            }
            y[i] = s / self.l[(i, i)];
        }
        // backward
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in (i + 1)..n {
                s = s - self.l[(j, i)] * y[j];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// Forward substitution only: solves L y = b.
    pub fn forward_solve(&self, b: &[S]) -> Vec<S> {
        let n = self.dim();
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s = s - self.l[(i, j)] * y[j];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// Solves (L L^T) X = B column-wise; B is n x m given as columns.
    pub fn solve_columns(&self, cols: &[Vec<S>]) -> Vec<Vec<S>> {
        cols.iter().map(|c| self.solve_vec(c)).collect()
    }

    pub fn logdet(&self) -> S {
        let n = self.dim();
        let mut acc = S::zero();
        for i in 0..n {
            acc = acc + self.l[(i, i)].ln();
        }
        acc + acc
    }

    /// Explicit inverse of the factored matrix. Only called at model scale
    /// (n below a hundred), where the cubic cost is irrelevant.
    pub fn inverse(&self) -> Mat<S> {
        let n = self.dim();
        let mut inv = Mat::zeros(n, n);
        for j in 0..n {
            let mut e = vec![S::zero(); n];
            e[j] = S::one();
            let col = self.solve_vec(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        // symmetrise against round-off so downstream gradients stay symmetric
        for i in 0..n {
            for j in (i + 1)..n {
                let v = (inv[(i, j)] + inv[(j, i)]) * S::c(0.5);
                inv[(i, j)] = v;
                inv[(j, i)] = v;
            }
        }
        inv
    }

    /// L L^T, for reconstruction checks.
    pub fn reconstruct(&self) -> Mat<S> {
        let n = self.dim();
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut s = S::zero();
                for k in 0..=i.min(j) {
                    s = s + self.l[(i, k)] * self.l[(j, k)];
                }
                m[(i, j)] = s;
            }
        }
        m
    }
}

/// Plain Cholesky of `m + jitter * I`; fails on a non-positive pivot.
pub fn cholesky<S: Scalar>(m: &Mat<S>, jitter: S) -> Result<Chol<S>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::domain("cholesky requires a square matrix"));
    }
    let mut l = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = m[(i, j)];
            if i == j {
                s = s + jitter;
            }
            for k in 0..j {
                s = s - l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if s <= S::zero() || !s.is_finite() {
                    return Err(Error::numerical(format!(
                        "cholesky pivot {s:?} at index {i} (jitter {jitter:?})"
                    )));
                }
                l[(i, j)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Ok(Chol { l, jitter })
}

/// Cholesky with jitter escalation: starts from `jitter` (then 1e-10 if that
/// was zero) and multiplies by 10 up to 1e-4 before giving up. The error
/// carries the last attempted jitter.
pub fn cholesky_escalate<S: Scalar>(m: &Mat<S>, jitter: S) -> Result<Chol<S>> {
    let max_jitter = S::c(1e-4);
    let mut j = jitter;
    loop {
        match cholesky(m, j) {
            Ok(c) => return Ok(c),
            Err(_) if j < max_jitter => {
                j = if j <= S::zero() { S::c(1e-10) } else { (j * S::c(10.0)).min(max_jitter) };
            }
            Err(_) => {
                return Err(Error::numerical(format!(
                    "cholesky failed after jitter escalation up to {j:?}"
                )))
            }
        }
    }
}

/// Quantile with linear interpolation on the sorted sample (R type 7).
pub fn quantile<S: Scalar>(sorted: &[S], q: S) -> S {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * S::of(n - 1);
    let lo = pos.floor().to_usize().unwrap_or(0).min(n - 1);
    let hi = (lo + 1).min(n - 1);
    let frac = pos - S::of(lo);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
