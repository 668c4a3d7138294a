//! Benchmark objectives: a 1D function with a jump at its optimum, a
//! quantised two-well 2D landscape, the unrotated bent-cigar and different-
//! powers functions, and the 4D Hartmann function. Reference minima are
//! frozen here and re-verified by the test oracles.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A deterministic objective over a bounded hyperrectangle.
#[derive(Clone)]
pub struct ObjectiveSpec<S: Scalar> {
    pub name: String,
    pub dim: usize,
    pub domain: Vec<(S, S)>,
    /// Known global minimum value, used as the regret reference.
    pub f_star: Option<S>,
    pub minimizer: Option<Vec<S>>,
    /// Observation noise level; the benchmark suite is noise-free.
    pub noise: S,
    eval: Arc<dyn Fn(&[S]) -> S + Send + Sync>,
}

impl<S: Scalar> std::fmt::Debug for ObjectiveSpec<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ObjectiveSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("f_star", &self.f_star)
            .finish()
    }
}

impl<S: Scalar> ObjectiveSpec<S> {
    pub fn new(
        name: impl Into<String>,
        domain: Vec<(S, S)>,
        f_star: Option<S>,
        minimizer: Option<Vec<S>>,
        eval: impl Fn(&[S]) -> S + Send + Sync + 'static,
    ) -> Self {
        let dim = domain.len();
        ObjectiveSpec {
            name: name.into(),
            dim,
            domain,
            f_star,
            minimizer,
            noise: S::zero(),
            eval: Arc::new(eval),
        }
    }

    /// Evaluates after checking domain membership (closed box).
    pub fn evaluate(&self, x: &[S]) -> Result<S> {
        if x.len() != self.dim {
            return Err(Error::domain(format!(
                "{}: expected {} coordinates, got {}",
                self.name,
                self.dim,
                x.len()
            )));
        }
        for (i, (&xi, &(lo, hi))) in x.iter().zip(self.domain.iter()).enumerate() {
            if !(xi >= lo && xi <= hi) {
                return Err(Error::domain(format!(
                    "{}: coordinate {i} = {xi:?} outside [{lo:?}, {hi:?}]",
                    self.name
                )));
            }
        }
        Ok((self.eval)(x))
    }

    pub fn domain_corners(&self) -> (Vec<S>, Vec<S>) {
        let lo = self.domain.iter().map(|&(l, _)| l).collect();
        let hi = self.domain.iter().map(|&(_, h)| h).collect();
        (lo, hi)
    }
}

/// Quadratic basin on the right of 0.6, shifted up by a jump on the left:
/// continuous for x >= 0.6 with minimum 0 at 0.6, and an upward step of 0.5
/// approaching the optimum from the left.
pub fn step1d<S: Scalar>(x: S) -> S {
    let t = x - S::c(0.6);
    if x >= S::c(0.6) {
        t * t
    } else {
        t * t + S::c(0.8) - S::c(0.5) * x
    }
}

/// x1^2 + 1e6 * sum_{i>=2} xi^2, unrotated; minimum 0 at the origin.
pub fn bent_cigar<S: Scalar>(x: &[S]) -> S {
    let mut acc = x[0] * x[0];
    for &xi in &x[1..] {
        acc += S::c(1e6) * xi * xi;
    }
    acc
}

/// sqrt(sum |xi|^(2 + 4 (i-1)/(d-1))); minimum 0 at the origin. Needs d >= 2.
pub fn diff_powers<S: Scalar>(x: &[S]) -> Result<S> {
    let d = x.len();
    if d < 2 {
        return Err(Error::domain("diff_powers requires dimension >= 2"));
    }
    let mut acc = S::zero();
    for (i, &xi) in x.iter().enumerate() {
        let expo = S::c(2.0) + S::c(4.0) * S::of(i) / S::of(d - 1);
        acc += xi.abs().powf(expo);
    }
    Ok(acc.sqrt())
}

const MANY_STEPS_WELL1: [f64; 2] = [0.2, 0.8];
const MANY_STEPS_WELL2: [f64; 2] = [0.7, 0.3];
const MANY_STEPS_WIDTH: f64 = 0.15;
const MANY_STEPS_BASIN_RADIUS: f64 = 0.45;
const MANY_STEPS_QUANTUM: f64 = 0.05;

/// Two-Gaussian-well base (depths 1.0 and 1.2 at (0.2, 0.8) and (0.7, 0.3),
/// widths 0.15) plus a mild quadratic, scaled by 100, and floor-quantised to
/// steps of 0.05 inside the well basins. The quantisation creates plateaus
/// and discontinuities around the optima; the scale gives high conditioning.
/// Global minimum -119.95 on the plateau containing (0.7, 0.3).
pub fn many_steps<S: Scalar>(x: &[S]) -> S {
    debug_assert_eq!(x.len(), 2);
    let d1sq = dist_sq_2d(x, &MANY_STEPS_WELL1);
    let d2sq = dist_sq_2d(x, &MANY_STEPS_WELL2);
    let two_w2 = S::c(2.0 * MANY_STEPS_WIDTH * MANY_STEPS_WIDTH);
    let base = S::c(1e-3) * (x[0] * x[0] + x[1] * x[1])
        - (-d1sq / two_w2).exp()
        - S::c(1.2) * (-d2sq / two_w2).exp();
    let g = S::c(100.0) * base;
    let r2 = S::c(MANY_STEPS_BASIN_RADIUS * MANY_STEPS_BASIN_RADIUS);
    if d1sq <= r2 || d2sq <= r2 {
        let q = S::c(MANY_STEPS_QUANTUM);
        (g / q).floor() * q
    } else {
        g
    }
}

fn dist_sq_2d<S: Scalar>(x: &[S], c: &[f64; 2]) -> S {
    let dx = x[0] - S::c(c[0]);
    let dy = x[1] - S::c(c[1]);
    dx * dx + dy * dy
}

const HARTMANN4_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const HARTMANN4_A: [[f64; 4]; 4] = [
    [10.0, 3.0, 17.0, 3.5],
    [0.05, 10.0, 17.0, 0.1],
    [3.0, 3.5, 1.7, 10.0],
    [17.0, 8.0, 0.05, 10.0],
];
const HARTMANN4_P: [[f64; 4]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124],
    [0.2329, 0.4135, 0.8307, 0.3736],
    [0.2348, 0.1451, 0.3522, 0.2883],
    [0.4047, 0.8828, 0.8732, 0.5743],
];

/// Reference minimum of [`hartmann4`], found by multi-start local descent
/// and re-verified by the test oracle.
pub const HARTMANN4_MIN: f64 = -3.7298405844855926;
pub const HARTMANN4_MINIMIZER: [f64; 4] =
    [0.18739526912480187, 0.19415153022085527, 0.5579177814326983, 0.26477962184947024];

/// Reference minimum of [`many_steps`]: the quantised plateau around the
/// deeper well.
pub const MANY_STEPS_MIN: f64 = -119.95;

/// 4D Hartmann function (first four columns of the Hartmann-6 matrices,
/// standard mixture weights).
pub fn hartmann4<S: Scalar>(x: &[S]) -> S {
    debug_assert_eq!(x.len(), 4);
    let mut acc = S::zero();
    for i in 0..4 {
        let mut inner = S::zero();
        for j in 0..4 {
            let t = x[j] - S::c(HARTMANN4_P[i][j]);
            inner += S::c(HARTMANN4_A[i][j]) * t * t;
        }
        acc += S::c(HARTMANN4_ALPHA[i]) * (-inner).exp();
    }
    -acc
}

fn unit_box<S: Scalar>(d: usize) -> Vec<(S, S)> {
    vec![(S::zero(), S::one()); d]
}

fn sym_box<S: Scalar>(d: usize, half: f64) -> Vec<(S, S)> {
    vec![(S::c(-half), S::c(half)); d]
}

/// All benchmark objectives, addressable by name from the CLI.
pub fn registry<S: Scalar>() -> Vec<ObjectiveSpec<S>> {
    vec![
        ObjectiveSpec::new(
            "step1d",
            unit_box(1),
            Some(S::zero()),
            Some(vec![S::c(0.6)]),
            |x: &[S]| step1d(x[0]),
        ),
        ObjectiveSpec::new(
            "many-steps",
            unit_box(2),
            Some(S::c(MANY_STEPS_MIN)),
            Some(vec![S::c(MANY_STEPS_WELL2[0]), S::c(MANY_STEPS_WELL2[1])]),
            |x: &[S]| many_steps(x),
        ),
        ObjectiveSpec::new(
            "bent-cigar",
            sym_box(2, 5.0),
            Some(S::zero()),
            Some(vec![S::zero(), S::zero()]),
            |x: &[S]| bent_cigar(x),
        ),
        ObjectiveSpec::new(
            "diff-powers",
            sym_box(2, 5.0),
            Some(S::zero()),
            Some(vec![S::zero(), S::zero()]),
            |x: &[S]| diff_powers(x).expect("dimension fixed at 2"),
        ),
        ObjectiveSpec::new(
            "hartmann4",
            unit_box(4),
            Some(S::c(HARTMANN4_MIN)),
            Some(HARTMANN4_MINIMIZER.iter().map(|&v| S::c(v)).collect()),
            |x: &[S]| hartmann4(x),
        ),
    ]
}

pub fn by_name<S: Scalar>(name: &str) -> Option<ObjectiveSpec<S>> {
    registry().into_iter().find(|s| s.name == name)
}
