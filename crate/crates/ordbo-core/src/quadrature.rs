//! Gauss-Hermite nodes and weights for expectations under a Gaussian.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Nodes and weights for the physicists' Gauss-Hermite rule:
/// integral of exp(-t^2) f(t) dt ~= sum w_i f(t_i).
///
/// Computed by Newton iteration on the Hermite recurrence; exact for
/// polynomials up to degree 2 * order - 1.
pub fn gauss_hermite<S: Scalar>(order: usize) -> Result<(Vec<S>, Vec<S>)> {
    if order < 2 {
        return Err(Error::domain("quadrature order must be at least 2"));
    }
    let n = order;
    let nf = S::of(n);
    let eps = S::c(1e-14).max(S::epsilon() * S::c(100.0));
    let pim4 = S::c(0.7511255444649425); // pi^(-1/4)
    let mut nodes = vec![S::zero(); n];
    let mut weights = vec![S::zero(); n];
    let m = (n + 1) / 2;
    let mut z = S::zero();
    for i in 0..m {
        // standard starting guesses for the outermost roots inward
        z = match i {
            0 => {
                (S::c(2.0) * nf + S::one()).sqrt()
                    - S::c(1.85575) * (S::c(2.0) * nf + S::one()).powf(-S::c(1.0) / S::c(6.0))
            }
            1 => z - S::c(1.14) * nf.powf(S::c(0.426)) / z,
            2 => S::c(1.86) * z - S::c(0.86) * nodes[0],
            3 => S::c(1.91) * z - S::c(0.91) * nodes[1],
            _ => S::c(2.0) * z - nodes[i - 2],
        };
        let mut pp = S::zero();
        for _ in 0..200 {
            let mut p1 = pim4;
            let mut p2 = S::zero();
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = S::of(j);
                p1 = z * (S::c(2.0) / jf).sqrt() * p2 - ((jf - S::one()) / jf).sqrt() * p3;
            }
            pp = (S::c(2.0) * nf).sqrt() * p2;
            let dz = p1 / pp;
            z = z - dz;
            if dz.abs() <= eps {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        let w = S::c(2.0) / (pp * pp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    // order ascending for reproducible summation order
    nodes.reverse();
    weights.reverse();
    Ok((nodes, weights))
}

/// E[f(X)] for X ~ N(mean, var) using a precomputed rule.
pub fn gauss_hermite_expectation<S: Scalar>(
    nodes: &[S],
    weights: &[S],
    mean: S,
    var: S,
    mut f: impl FnMut(S) -> S,
) -> S {
    let scale = (S::c(2.0) * var).sqrt();
    let inv_sqrt_pi = S::c(0.5641895835477563); // 1/sqrt(pi)
    let mut acc = S::zero();
    for (&t, &w) in nodes.iter().zip(weights.iter()) {
        acc = acc + w * f(mean + scale * t);
    }
    acc * inv_sqrt_pi
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT_PI: f64 = 1.7724538509055159;

    #[test]
    fn order_five_reference() {
        let (t, w) = gauss_hermite::<f64>(5).unwrap();
        // classical tabulated values
        let t_ref = [-2.0201828704560856, -0.9585724646138185, 0.0, 0.9585724646138185, 2.0201828704560856];
        let w_ref = [0.019953242059045913, 0.3936193231522412, 0.9453087204829419, 0.3936193231522412, 0.019953242059045913];
        for i in 0..5 {
            assert!((t[i] - t_ref[i]).abs() < 1e-10, "node {i}");
            assert!((w[i] - w_ref[i]).abs() < 1e-10, "weight {i}");
        }
    }

    #[test]
    fn moments_are_exact() {
        for order in [2usize, 8, 20, 40] {
            let (t, w) = gauss_hermite::<f64>(order).unwrap();
            let m0: f64 = w.iter().sum();
            let m2: f64 = t.iter().zip(w.iter()).map(|(&ti, &wi)| wi * ti * ti).sum();
            assert!((m0 - SQRT_PI).abs() < 1e-12, "order {order} mass");
            assert!((m2 - SQRT_PI / 2.0).abs() < 1e-11, "order {order} second moment");
        }
    }

    #[test]
    fn expectation_of_quadratic() {
        let (t, w) = gauss_hermite::<f64>(20).unwrap();
        // E[(X - 1)^2] for X ~ N(3, 0.25) is var + (mean-1)^2 = 4.25
        let e = gauss_hermite_expectation(&t, &w, 3.0, 0.25, |x| (x - 1.0) * (x - 1.0));
        assert!((e - 4.25).abs() < 1e-12);
    }

    #[test]
    fn rejects_tiny_order() {
        assert!(gauss_hermite::<f64>(1).is_err());
    }
}
