//! Rank computation and ordinal warpings of inputs and outputs.
//!
//! A warping maps the j-th ranked value of a finite set to the partial sum
//! of positive increments up to that rank, so only the ordering of the raw
//! data survives. Inputs get one warping per dimension; outputs get a bin
//! ladder whose edges are anchored at `bin_anchor` and grown by positive
//! increments.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::Scalar;

/// 1-based ranks: rank(u_j) counts entries <= u_j, with exact ties broken
/// by original index order so the result is always a strict permutation.
pub fn rank_vector<S: Scalar>(values: &[S]) -> Result<Vec<usize>> {
    if values.is_empty() {
        return Err(Error::domain("rank_vector requires a non-empty input"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("rank_vector requires finite values"));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    let mut ranks = vec![0usize; values.len()];
    for (pos, &idx) in order.iter().enumerate() {
        ranks[idx] = pos + 1;
    }
    Ok(ranks)
}

/// Partial-sum warp: s_j = sum of deltas[0..rank_j]. Ranks must form a
/// permutation of 1..n and all deltas must be strictly positive.
pub fn warp_values<S: Scalar>(ranks: &[usize], deltas: &[S]) -> Result<Vec<S>> {
    let n = ranks.len();
    if deltas.len() != n {
        return Err(Error::domain("warp_values: ranks and deltas length mismatch"));
    }
    if deltas.iter().any(|&d| !(d > S::zero())) {
        return Err(Error::domain("warp_values: deltas must be strictly positive"));
    }
    let mut seen = vec![false; n];
    for &r in ranks {
        if r == 0 || r > n || seen[r - 1] {
            return Err(Error::domain("warp_values: ranks must form a permutation of 1..n"));
        }
        seen[r - 1] = true;
    }
    Ok(partial_sum_warp(ranks, deltas))
}

/// The unchecked partial-sum core, shared with warp states whose first
/// increment is pinned to zero.
fn partial_sum_warp<S: Scalar>(ranks: &[usize], deltas: &[S]) -> Vec<S> {
    let n = ranks.len();
    let mut cumsum = vec![S::zero(); n];
    let mut acc = S::zero();
    for (i, &d) in deltas.iter().enumerate() {
        acc += d;
        cumsum[i] = acc;
    }
    ranks.iter().map(|&r| cumsum[r - 1]).collect()
}

/// Bin edges (-inf, b1, b1 + d1, ..., +inf) from an anchor and positive
/// increments. Returns m + 3 values for m increments.
pub fn bin_edges<S: Scalar>(anchor: S, increments: &[S]) -> Result<Vec<S>> {
    if increments.iter().any(|&d| !(d > S::zero())) {
        return Err(Error::domain("bin_edges: increments must be strictly positive"));
    }
    let mut edges = Vec::with_capacity(increments.len() + 3);
    edges.push(S::neg_infinity());
    let mut acc = anchor;
    edges.push(acc);
    for &d in increments {
        acc += d;
        edges.push(acc);
    }
    edges.push(S::infinity());
    Ok(edges)
}

/// Per-coordinate movement budget Cd/n for the warp refit at iteration n.
pub fn movement_radius<S: Scalar>(n: usize, c: S, d: usize) -> Result<S> {
    if n == 0 {
        return Err(Error::domain("movement_radius requires n >= 1"));
    }
    if !(c > S::zero()) {
        return Err(Error::domain("movement_radius requires C > 0"));
    }
    Ok(c * S::of(d) / S::of(n))
}

/// Inputs, outputs, and their per-dimension / output ranks.
#[derive(Debug, Clone)]
pub struct RankedDataset<S> {
    x: Mat<S>,
    y: Vec<S>,
    /// input_ranks[j][i] is the rank of observation i in dimension j.
    input_ranks: Vec<Vec<usize>>,
    output_ranks: Vec<usize>,
}

impl<S: Scalar> RankedDataset<S> {
    pub fn new(x: Mat<S>, y: Vec<S>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::domain("RankedDataset: X and y row count mismatch"));
        }
        if x.nrows() == 0 {
            return Err(Error::domain("RankedDataset: empty dataset"));
        }
        let d = x.ncols();
        let mut input_ranks = Vec::with_capacity(d);
        for j in 0..d {
            let col: Vec<S> = (0..x.nrows()).map(|i| x[(i, j)]).collect();
            input_ranks.push(rank_vector(&col)?);
        }
        let output_ranks = rank_vector(&y)?;
        Ok(RankedDataset { x, y, input_ranks, output_ranks })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Mat<S> {
        &self.x
    }

    pub fn y(&self) -> &[S] {
        &self.y
    }

    pub fn input_ranks(&self) -> &[Vec<usize>] {
        &self.input_ranks
    }

    pub fn output_ranks(&self) -> &[usize] {
        &self.output_ranks
    }

    /// Appends an observation and recomputes all ranks.
    pub fn push(&mut self, x_new: &[S], y_new: S) -> Result<()> {
        if x_new.len() != self.dim() {
            return Err(Error::domain("push: dimension mismatch"));
        }
        self.x.push_row(x_new);
        self.y.push(y_new);
        let d = self.dim();
        for j in 0..d {
            let col: Vec<S> = (0..self.x.nrows()).map(|i| self.x[(i, j)]).collect();
            self.input_ranks[j] = rank_vector(&col)?;
        }
        self.output_ranks = rank_vector(&self.y)?;
        Ok(())
    }
}

/// The full ordinal warping state: per-dimension input increments (the first
/// of each dimension pinned to zero), the output bin ladder, the likelihood
/// noise, parameter bounds, and the movement constant of the refit cap.
#[derive(Debug, Clone)]
pub struct WarpState<S> {
    /// input_deltas[j] has one entry per observation; entry 0 is pinned to 0.
    pub input_deltas: Vec<Vec<S>>,
    /// n - 2 increments generating the n - 1 finite bin edges.
    pub bin_increments: Vec<S>,
    pub bin_anchor: S,
    pub noise_sigma: S,
    /// (delta_min, delta_max) box for every free input increment.
    pub delta_bounds: (S, S),
    /// Box for bin increments.
    pub bin_bounds: (S, S),
    /// Box for the likelihood noise.
    pub sigma_bounds: (S, S),
    /// C of the per-refit movement cap Cd/n.
    pub movement_constant: S,
}

impl<S: Scalar> WarpState<S> {
    /// Initial state for n observations in d dimensions: input increments
    /// 1/n so each latent dimension spans (0, 1], bin edges spaced 4/(n-1)
    /// from an anchor of -2, noise 0.1.
    pub fn init(n: usize, d: usize) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::domain("WarpState::init requires n >= 1 and d >= 1"));
        }
        let inc = S::one() / S::of(n);
        let mut input_deltas = Vec::with_capacity(d);
        for _ in 0..d {
            let mut deltas = vec![inc; n];
            deltas[0] = S::zero();
            input_deltas.push(deltas);
        }
        let bin_bounds = (S::c(1e-3), S::c(4.0));
        let bin_inc = if n >= 3 {
            (S::c(4.0) / S::of(n - 1)).max(bin_bounds.0).min(bin_bounds.1)
        } else {
            S::zero() // unused: fewer than three observations need no increments
        };
        let bin_increments = if n >= 3 { vec![bin_inc; n - 2] } else { Vec::new() };
        Ok(WarpState {
            input_deltas,
            bin_increments,
            bin_anchor: S::c(-2.0),
            noise_sigma: S::c(0.1),
            delta_bounds: (S::c(1e-3) / S::of(n), S::c(5.0)),
            bin_bounds,
            sigma_bounds: (S::c(1e-4), S::one()),
            movement_constant: S::one(),
        })
    }

    pub fn n_obs(&self) -> usize {
        self.input_deltas.first().map_or(0, |v| v.len())
    }

    pub fn dim(&self) -> usize {
        self.input_deltas.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_obs();
        for (j, deltas) in self.input_deltas.iter().enumerate() {
            if deltas.len() != n {
                return Err(Error::domain("inconsistent increment counts across dimensions"));
            }
            if deltas[0] != S::zero() {
                return Err(Error::domain(format!("first increment of dimension {j} must be pinned to 0")));
            }
            for (i, &d) in deltas.iter().enumerate().skip(1) {
                if !(d > S::zero() && d <= self.delta_bounds.1) {
                    return Err(Error::domain(format!(
                        "input increment [{j}][{i}] = {d:?} outside (0, {:?}]",
                        self.delta_bounds.1
                    )));
                }
            }
        }
        for (i, &d) in self.bin_increments.iter().enumerate() {
            if !(d > S::zero() && d <= self.bin_bounds.1) {
                return Err(Error::domain(format!("bin increment {i} = {d:?} out of range")));
            }
        }
        if !(self.noise_sigma >= self.sigma_bounds.0 && self.noise_sigma <= self.sigma_bounds.1) {
            return Err(Error::domain("noise sigma out of bounds"));
        }
        if !(self.delta_bounds.0 > S::zero() && self.delta_bounds.0 < self.delta_bounds.1) {
            return Err(Error::domain("delta bounds must satisfy 0 < min < max"));
        }
        Ok(())
    }

    /// Bin edges (with infinite sentinels) for the current number of
    /// observations. One observation means a single unbounded bin.
    pub fn edges(&self) -> Result<Vec<S>> {
        if self.n_obs() <= 1 {
            return Ok(vec![S::neg_infinity(), S::infinity()]);
        }
        bin_edges(self.bin_anchor, &self.bin_increments)
    }

    /// Latent coordinates of every observation (rows) and their bin indices
    /// (the output ranks). Column j applies dimension j's increments to the
    /// dataset's dimension-j ranks.
    pub fn latent_coordinates(&self, ds: &RankedDataset<S>) -> Result<(Mat<S>, Vec<usize>)> {
        let n = ds.len();
        let d = ds.dim();
        if self.dim() != d || self.n_obs() != n {
            return Err(Error::domain("latent_coordinates: warp/dataset shape mismatch"));
        }
        let mut s = Mat::zeros(n, d);
        for j in 0..d {
            let col = partial_sum_warp(&ds.input_ranks()[j], &self.input_deltas[j]);
            for i in 0..n {
                s[(i, j)] = col[i];
            }
        }
        Ok((s, ds.output_ranks().to_vec()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn rank_examples() {
        assert_eq!(rank_vector(&[3.2f64, 1.1, 7.5]).unwrap(), vec![2, 1, 3]);
        let inc: Vec<f64> = (0..6).map(|i| i as f64).collect();
        assert_eq!(rank_vector(&inc).unwrap(), vec![1, 2, 3, 4, 5, 6]);
        assert!(rank_vector::<f64>(&[]).is_err());
        assert!(rank_vector(&[f64::NAN]).is_err());
    }

    #[test]
    fn rank_ties_break_by_index() {
        assert_eq!(rank_vector(&[2.0f64, 1.0, 2.0]).unwrap(), vec![2, 1, 3]);
    }

    #[test]
    fn ranks_invariant_under_monotone_map() {
        let mut rng = crate::rng::derive_rng(17, "warp-rank-inv");
        for _ in 0..200 {
            let v: Vec<f64> = (0..12).map(|_| rng.gen::<f64>() * 8.0 - 4.0).collect();
            let cubed: Vec<f64> = v.iter().map(|&u| u * u * u).collect();
            assert_eq!(rank_vector(&v).unwrap(), rank_vector(&cubed).unwrap());
        }
    }

    #[test]
    fn warp_values_examples() {
        // all deltas one reduces to the rank transformation
        let ranks = vec![2usize, 1, 3];
        let s = warp_values(&ranks, &[1.0f64, 1.0, 1.0]).unwrap();
        assert_eq!(s, vec![2.0, 1.0, 3.0]);

        let s2 = warp_values(&[2usize, 1], &[0.3f64, 0.4]).unwrap();
        assert!((s2[0] - 0.7).abs() < 1e-15);
        assert!((s2[1] - 0.3).abs() < 1e-15);

        assert!(warp_values(&[1usize, 2], &[0.0f64, 1.0]).is_err());
    }

    #[test]
    fn warp_preserves_ordering() {
        let mut rng = crate::rng::derive_rng(23, "warp-order");
        for _ in 0..1000 {
            let v: Vec<f64> = (0..8).map(|_| rng.gen::<f64>()).collect();
            let ranks = rank_vector(&v).unwrap();
            let deltas: Vec<f64> = (0..8).map(|_| rng.gen::<f64>() + 0.01).collect();
            let s = warp_values(&ranks, &deltas).unwrap();
            assert_eq!(rank_vector(&s).unwrap(), ranks);
        }
    }

    #[test]
    fn bin_edge_examples() {
        let e = bin_edges(0.0f64, &[0.5, 0.5]).unwrap();
        assert_eq!(e.len(), 5);
        assert_eq!(e[0], f64::NEG_INFINITY);
        assert_eq!(e[1], 0.0);
        assert_eq!(e[2], 0.5);
        assert_eq!(e[3], 1.0);
        assert_eq!(e[4], f64::INFINITY);

        let two_bins = bin_edges(-1.0f64, &[]).unwrap();
        assert_eq!(two_bins, vec![f64::NEG_INFINITY, -1.0, f64::INFINITY]);

        assert!(bin_edges(0.0f64, &[0.5, -0.1]).is_err());

        let mut rng = crate::rng::derive_rng(29, "warp-edges");
        for _ in 0..100 {
            let incs: Vec<f64> = (0..6).map(|_| rng.gen::<f64>() + 1e-6).collect();
            let e = bin_edges(rng.gen::<f64>() - 0.5, &incs).unwrap();
            assert!(e.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn movement_radius_examples() {
        assert!((movement_radius(10, 1.0f64, 2).unwrap() - 0.2).abs() < 1e-15);
        assert!((movement_radius(1, 1.0f64, 1).unwrap() - 1.0).abs() < 1e-15);
        assert!(movement_radius(0, 1.0f64, 1).is_err());
        let mut prev = f64::INFINITY;
        for n in 1..50 {
            let r = movement_radius(n, 1.0f64, 3).unwrap();
            assert!(r < prev);
            prev = r;
        }
    }

    #[test]
    fn latent_coordinates_match_naive_oracle() {
        let mut rng = crate::rng::derive_rng(31, "warp-latent");
        let n = 5;
        let d = 3;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen()).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let ds = RankedDataset::new(Mat::from_rows(&rows).unwrap(), y).unwrap();
        let mut w = WarpState::<f64>::init(n, d).unwrap();
        for j in 0..d {
            for i in 1..n {
                w.input_deltas[j][i] = rng.gen::<f64>() * 0.4 + 0.05;
            }
        }
        let (s, bins) = w.latent_coordinates(&ds).unwrap();
        // naive per-dimension recomputation
        for j in 0..d {
            for i in 0..n {
                let rank = ds.input_ranks()[j][i];
                let mut acc = 0.0;
                for u in 0..rank {
                    acc += w.input_deltas[j][u];
                }
                assert!((s[(i, j)] - acc).abs() < 1e-14);
            }
        }
        assert_eq!(bins, ds.output_ranks().to_vec());
    }

    #[test]
    fn latent_coordinates_trivial_cases() {
        // all free deltas 1 reproduces ranks minus one (first increment pinned to 0)
        let rows = vec![vec![0.9f64], vec![0.1], vec![0.5]];
        let ds = RankedDataset::new(Mat::from_rows(&rows).unwrap(), vec![1.0, 2.0, 3.0]).unwrap();
        let mut w = WarpState::<f64>::init(3, 1).unwrap();
        for i in 1..3 {
            w.input_deltas[0][i] = 1.0;
        }
        let (s, _) = w.latent_coordinates(&ds).unwrap();
        // ranks are [3, 1, 2]; coordinates are rank - 1 with the pinned zero
        assert_eq!(s[(0, 0)], 2.0);
        assert_eq!(s[(1, 0)], 0.0);
        assert_eq!(s[(2, 0)], 1.0);

        // single observation sits at the pinned first increment
        let one = RankedDataset::new(Mat::from_rows(&[vec![0.2f64, 0.8]]).unwrap(), vec![5.0]).unwrap();
        let w1 = WarpState::<f64>::init(1, 2).unwrap();
        let (s1, _) = w1.latent_coordinates(&one).unwrap();
        assert_eq!(s1[(0, 0)], 0.0);
        assert_eq!(s1[(0, 1)], 0.0);
    }

    #[test]
    fn latent_injective_on_distinct_data() {
        let mut rng = crate::rng::derive_rng(37, "warp-inj");
        let n = 8;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen(), rng.gen()]).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let ds = RankedDataset::new(Mat::from_rows(&rows).unwrap(), y).unwrap();
        let w = WarpState::<f64>::init(n, 2).unwrap();
        let (s, _) = w.latent_coordinates(&ds).unwrap();
        for a in 0..n {
            for b in (a + 1)..n {
                assert!(Mat::row_dist(s.row(a), s.row(b)) > 0.0);
            }
        }
    }

    #[test]
    fn init_respects_bounds() {
        let w = WarpState::<f64>::init(5, 2).unwrap();
        w.validate().unwrap();
        assert_eq!(w.bin_increments.len(), 3);
        assert!((w.bin_increments[0] - 1.0).abs() < 1e-15);
        assert_eq!(w.edges().unwrap().len(), 6); // -inf, 4 finite, +inf
    }
}
